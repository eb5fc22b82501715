// SPDX-License-Identifier: Apache-2.0

#include "padmod/baseline_padding.hpp"

#include <stdexcept>

namespace padmod {

PadKind parse_pad_kind(std::string_view name) {
  if (name == "zero") return PadKind::zero;
  if (name == "reflect") return PadKind::reflect;
  if (name == "replicate") return PadKind::replicate;
  if (name == "meaninterp") return PadKind::mean_interp;
  if (name == "module") return PadKind::module;
  throw std::invalid_argument("unknown padding method: " + std::string(name));
}

std::string to_string(PadKind kind) {
  switch (kind) {
    case PadKind::zero: return "zero";
    case PadKind::reflect: return "reflect";
    case PadKind::replicate: return "replicate";
    case PadKind::mean_interp: return "meaninterp";
    case PadKind::module: return "module";
  }
  return "?";
}

namespace {

template <typename T>
Shape padded_shape(const Tensor<T>& m, std::size_t s) {
  std::vector<std::size_t> dims = m.shape().dims();
  dims[0] += 2 * s;
  dims[1] += 2 * s;
  return Shape(std::move(dims));
}

// Source index along one axis for output index `i` of a padded axis.
std::size_t replicate_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
  return static_cast<std::size_t>(i);
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i > last) return static_cast<std::size_t>(2 * last - i);
  return static_cast<std::size_t>(i);
}

template <typename T, typename IndexFn>
Tensor<T> pad_by_index(const Tensor<T>& m, std::size_t s, IndexFn index) {
  Tensor<T> out = Tensor<T>::zeros(padded_shape(m, s));
  const auto off = static_cast<std::ptrdiff_t>(s);
  for (std::size_t i = 0; i < out.height(); ++i) {
    const std::size_t si = index(static_cast<std::ptrdiff_t>(i) - off, m.height());
    for (std::size_t j = 0; j < out.width(); ++j) {
      const std::size_t sj = index(static_cast<std::ptrdiff_t>(j) - off, m.width());
      for (std::size_t c = 0; c < m.channels(); ++c) out(i, j, c) = m(si, sj, c);
    }
  }
  return out;
}

template <typename T, typename IndexFn>
Tensor<T> adjoint_by_index(const Tensor<T>& g, std::size_t s, IndexFn index) {
  std::vector<std::size_t> dims = g.shape().dims();
  if (dims[0] <= 2 * s || dims[1] <= 2 * s) throw std::invalid_argument("gradient smaller than padding");
  dims[0] -= 2 * s;
  dims[1] -= 2 * s;
  Tensor<T> out = Tensor<T>::zeros(Shape(dims));
  const auto off = static_cast<std::ptrdiff_t>(s);
  for (std::size_t i = 0; i < g.height(); ++i) {
    const std::size_t si = index(static_cast<std::ptrdiff_t>(i) - off, out.height());
    for (std::size_t j = 0; j < g.width(); ++j) {
      const std::size_t sj = index(static_cast<std::ptrdiff_t>(j) - off, out.width());
      for (std::size_t c = 0; c < g.channels(); ++c) out(si, sj, c) += g(i, j, c);
    }
  }
  return out;
}

void require_size(std::size_t s) {
  if (s == 0) throw std::invalid_argument("padding size must be >= 1");
}

}  // namespace

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& m, std::size_t s) {
  require_size(s);
  Tensor<T> out = Tensor<T>::zeros(padded_shape(m, s));
  const std::size_t c = m.channels();
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < m.height(); ++i) {
    std::copy_n(src.begin() + i * m.width() * c, m.width() * c,
                dst.begin() + ((i + s) * out.width() + s) * c);
  }
  return out;
}

template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& m, std::size_t s) {
  require_size(s);
  return pad_by_index(m, s, replicate_index);
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& m, std::size_t s) {
  require_size(s);
  if (s >= std::min(m.height(), m.width())) {
    throw std::invalid_argument("reflect padding of size " + std::to_string(s) + " needs an input larger than " +
                                m.shape().str());
  }
  return pad_by_index(m, s, reflect_index);
}

template <typename T>
Tensor<T> pad_mean_interp(const Tensor<T>& m, std::size_t s) {
  require_size(s);
  if (m.height() < 2 || m.width() < 2) {
    throw std::invalid_argument("mean-interpolation padding needs at least 2x2, got " + m.shape().str());
  }
  const Filter3<T> mean{T(1) / T(3), T(1) / T(3), T(1) / T(3)};
  if (m.shape().rank() == 2) return pad_plane(m, mean, s);
  std::vector<Tensor<T>> planes;
  planes.reserve(m.channels());
  for (std::size_t c = 0; c < m.channels(); ++c) planes.push_back(pad_plane(channel_plane(m, c), mean, s));
  return stack_planes(planes);
}

template <typename T>
Tensor<T> pad_fixed(const Tensor<T>& m, PadMethod method) {
  switch (method.kind) {
    case PadKind::zero: return pad_zero(m, method.size);
    case PadKind::reflect: return pad_reflect(m, method.size);
    case PadKind::replicate: return pad_replicate(m, method.size);
    case PadKind::mean_interp: return pad_mean_interp(m, method.size);
    case PadKind::module: break;
  }
  throw std::invalid_argument("module padding needs a PaddingModule, not pad_fixed");
}

template <typename T>
Tensor<T> pad_adjoint(const Tensor<T>& g, PadMethod method) {
  switch (method.kind) {
    case PadKind::replicate: return adjoint_by_index(g, method.size, replicate_index);
    case PadKind::reflect: return adjoint_by_index(g, method.size, reflect_index);
    default: return interior(g, method.size);
  }
}

#define PADMOD_INSTANTIATE(T)                                    \
  template Tensor<T> pad_zero(const Tensor<T>&, std::size_t);      \
  template Tensor<T> pad_replicate(const Tensor<T>&, std::size_t); \
  template Tensor<T> pad_reflect(const Tensor<T>&, std::size_t);   \
  template Tensor<T> pad_mean_interp(const Tensor<T>&, std::size_t); \
  template Tensor<T> pad_fixed(const Tensor<T>&, PadMethod);       \
  template Tensor<T> pad_adjoint(const Tensor<T>&, PadMethod);

PADMOD_INSTANTIATE(float)
PADMOD_INSTANTIATE(double)

#undef PADMOD_INSTANTIATE

}  // namespace padmod
