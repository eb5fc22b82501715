// SPDX-License-Identifier: Apache-2.0
//
// Fixed padding methods used as comparators for the padding module.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "padmod/padding_module.hpp"
#include "padmod/tensor.hpp"

namespace padmod {

enum class PadKind { zero, reflect, replicate, mean_interp, module };

/// Parses the CLI spelling ("zero", "reflect", "replicate", "meaninterp",
/// "module").
PadKind parse_pad_kind(std::string_view name);
std::string to_string(PadKind kind);

struct PadMethod {
  PadKind kind = PadKind::zero;
  std::size_t size = 1;
};

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& m, std::size_t s);

/// Each new pixel copies the nearest original pixel.
template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& m, std::size_t s);

/// Mirror about the edge without repeating it. Requires s < min(H, W).
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& m, std::size_t s);

/// The padding module's ring-by-ring pipeline with every filter frozen at
/// (1/3, 1/3, 1/3): pads with local means of the border. A stand-in for
/// mean-interpolation padding, not a reproduction of it.
template <typename T>
Tensor<T> pad_mean_interp(const Tensor<T>& m, std::size_t s);

/// Dispatches to one of the fixed methods above. PadKind::module is rejected
/// because it needs trained filters.
template <typename T>
Tensor<T> pad_fixed(const Tensor<T>& m, PadMethod method);

/// Adjoint of pad_replicate / pad_reflect: folds the gradient of every padded
/// pixel back onto the source pixel it was copied from. For zero padding this
/// is the interior slice. Mean-interpolation and module padding are stripped
/// the same way, matching the padding module's backward.
template <typename T>
Tensor<T> pad_adjoint(const Tensor<T>& g, PadMethod method);

}  // namespace padmod
