// SPDX-License-Identifier: Apache-2.0

#include "padmod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace padmod {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() != 2 && dims_.size() != 3) {
    throw std::invalid_argument("shape must have rank 2 or 3, got " + std::to_string(dims_.size()));
  }
  for (std::size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("shape dimensions must be >= 1: " + str());
  }
}

std::size_t Shape::size() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
  const std::size_t n = shape.size();
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

namespace {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* what) {
  if (t.shape().rank() != 2) {
    throw std::invalid_argument(std::string(what) + " expects a rank-2 tensor, got " + t.shape().str());
  }
}

}  // namespace

template <typename T>
RowVec<T> row(const Tensor<T>& t, std::size_t i) {
  require_rank2(t, "row");
  if (i >= t.height()) throw std::out_of_range("row index " + std::to_string(i) + " out of range");
  auto d = t.data();
  return RowVec<T>(d.begin() + i * t.width(), d.begin() + (i + 1) * t.width());
}

template <typename T>
RowVec<T> col_t(const Tensor<T>& t, std::size_t j) {
  require_rank2(t, "col_t");
  if (j >= t.width()) throw std::out_of_range("column index " + std::to_string(j) + " out of range");
  RowVec<T> out(t.height());
  for (std::size_t i = 0; i < t.height(); ++i) out[i] = t(i, j);
  return out;
}

template <typename T>
Tensor<T> vconcat(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "vconcat");
  require_rank2(b, "vconcat");
  if (a.width() != b.width()) {
    throw std::invalid_argument("vconcat width mismatch: " + a.shape().str() + " vs " + b.shape().str());
  }
  std::vector<T> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor<T>(Shape{a.height() + b.height(), a.width()}, std::move(data));
}

template <typename T>
Tensor<T> as_row_tensor(const RowVec<T>& v) {
  return Tensor<T>(Shape{1, v.size()}, v);
}

template <typename T>
RowVec<T> reflect_pad_1d(std::span<const T> v) {
  const std::size_t n = v.size();
  if (n < 2) throw std::invalid_argument("reflect_pad_1d needs length >= 2, got " + std::to_string(n));
  RowVec<T> out(n + 2);
  out[0] = v[1];
  std::copy(v.begin(), v.end(), out.begin() + 1);
  out[n + 1] = v[n - 2];
  return out;
}

template <typename T>
RowVec<T> zero_pad_1d(std::span<const T> v) {
  RowVec<T> out(v.size() + 2, T{});
  std::copy(v.begin(), v.end(), out.begin() + 1);
  return out;
}

template <typename T>
Tensor<T> interior(const Tensor<T>& t, std::size_t margin) {
  const std::size_t h = t.height(), w = t.width(), c = t.channels();
  if (h <= 2 * margin || w <= 2 * margin) {
    throw std::invalid_argument("interior margin " + std::to_string(margin) + " too large for " +
                                t.shape().str());
  }
  std::vector<std::size_t> dims = t.shape().dims();
  dims[0] = h - 2 * margin;
  dims[1] = w - 2 * margin;
  std::vector<T> data;
  data.reserve(dims[0] * dims[1] * c);
  auto src = t.data();
  for (std::size_t i = margin; i < h - margin; ++i) {
    auto first = src.begin() + (i * w + margin) * c;
    data.insert(data.end(), first, first + dims[1] * c);
  }
  return Tensor<T>(Shape(std::move(dims)), std::move(data));
}

template <typename T>
Tensor<T> channel_plane(const Tensor<T>& t, std::size_t c) {
  const std::size_t nc = t.channels();
  if (c >= nc) throw std::out_of_range("channel " + std::to_string(c) + " out of range");
  std::vector<T> data(t.height() * t.width());
  auto src = t.data();
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = src[k * nc + c];
  return Tensor<T>(Shape{t.height(), t.width()}, std::move(data));
}

template <typename T>
Tensor<T> stack_planes(const std::vector<Tensor<T>>& planes) {
  if (planes.empty()) throw std::invalid_argument("stack_planes needs at least one plane");
  const Shape& s = planes.front().shape();
  const std::size_t nc = planes.size(), hw = s.height() * s.width();
  std::vector<T> data(hw * nc);
  for (std::size_t c = 0; c < nc; ++c) {
    if (planes[c].shape() != s) throw std::invalid_argument("stack_planes shape mismatch");
    auto src = planes[c].data();
    for (std::size_t k = 0; k < hw; ++k) data[k * nc + c] = src[k];
  }
  return Tensor<T>(Shape{s.height(), s.width(), nc}, std::move(data));
}

#define PADMOD_INSTANTIATE(T)                                           \
  template class Tensor<T>;                                             \
  template RowVec<T> row(const Tensor<T>&, std::size_t);                \
  template RowVec<T> col_t(const Tensor<T>&, std::size_t);              \
  template Tensor<T> vconcat(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> as_row_tensor(const RowVec<T>&);                   \
  template RowVec<T> reflect_pad_1d(std::span<const T>);                \
  template RowVec<T> zero_pad_1d(std::span<const T>);                   \
  template Tensor<T> interior(const Tensor<T>&, std::size_t);           \
  template Tensor<T> channel_plane(const Tensor<T>&, std::size_t);      \
  template Tensor<T> stack_planes(const std::vector<Tensor<T>>&);

PADMOD_INSTANTIATE(float)
PADMOD_INSTANTIATE(double)

#undef PADMOD_INSTANTIATE

}  // namespace padmod
