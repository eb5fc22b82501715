// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major, channel-last tensor of rank 2 (H, W) or 3 (H, W, C), plus
// the row/column slicing and 1-D padding primitives used by the padding
// module.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace padmod {

/// Thrown when a numerical routine produces NaN or Inf.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Shape {
 public:
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t height() const { return dims_[0]; }
  std::size_t width() const { return dims_[1]; }
  /// 1 for rank-2 shapes.
  std::size_t channels() const { return dims_.size() == 3 ? dims_[2] : 1; }
  std::size_t size() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

template <typename T>
using RowVec = std::vector<T>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1, 1}, data_(1, T{}) {}
  Tensor(Shape shape, std::vector<T> data);

  static Tensor filled(Shape shape, T value);
  static Tensor zeros(Shape shape) { return filled(std::move(shape), T{}); }

  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height(); }
  std::size_t width() const { return shape_.width(); }
  std::size_t channels() const { return shape_.channels(); }
  std::size_t size() const { return data_.size(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  T operator()(std::size_t h, std::size_t w, std::size_t c = 0) const {
    return data_[(h * width() + w) * channels() + c];
  }
  T& operator()(std::size_t h, std::size_t w, std::size_t c = 0) {
    return data_[(h * width() + w) * channels() + c];
  }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Row i of a rank-2 tensor.
template <typename T>
RowVec<T> row(const Tensor<T>& t, std::size_t i);

/// Column j of a rank-2 tensor, returned as a row vector.
template <typename T>
RowVec<T> col_t(const Tensor<T>& t, std::size_t j);

/// Stacks the rows of `a` above the rows of `b`. Both must be rank 2 with
/// equal widths.
template <typename T>
Tensor<T> vconcat(const Tensor<T>& a, const Tensor<T>& b);

/// Wraps a row vector into a 1xN rank-2 tensor.
template <typename T>
Tensor<T> as_row_tensor(const RowVec<T>& v);

/// [v1, v0 .. v(n-1), v(n-2)]: mirror without repeating the edge element.
template <typename T>
RowVec<T> reflect_pad_1d(std::span<const T> v);

/// [0, v, 0].
template <typename T>
RowVec<T> zero_pad_1d(std::span<const T> v);

template <typename T>
RowVec<T> reflect_pad_1d(const RowVec<T>& v) {
  return reflect_pad_1d(std::span<const T>(v));
}

template <typename T>
RowVec<T> zero_pad_1d(const RowVec<T>& v) {
  return zero_pad_1d(std::span<const T>(v));
}

/// Centered sub-tensor with `margin` rows/columns removed on every side.
template <typename T>
Tensor<T> interior(const Tensor<T>& t, std::size_t margin);

/// Channel `c` of an (H, W, C) tensor as an (H, W) tensor.
template <typename T>
Tensor<T> channel_plane(const Tensor<T>& t, std::size_t c);

/// Interleaves equally-shaped (H, W) planes into one (H, W, C) tensor.
template <typename T>
Tensor<T> stack_planes(const std::vector<Tensor<T>>& planes);

}  // namespace padmod
