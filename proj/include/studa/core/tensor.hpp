#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "studa/core/errors.hpp"

namespace studa {

using Shape = std::vector<int>;

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Image batches are NCHW.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel_of(shape_))
      throw ShapeError("data size " + std::to_string(data_.size()) + " vs shape " + shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW accessors.
  T& at(int n, int c, int h, int w) noexcept {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(int n, int c, int h, int w) const noexcept {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (numel_of(s) != data_.size()) throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  // Slice of the leading dimension [begin, end).
  Tensor slice0(int begin, int end) const {
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t stride = data_.size() / static_cast<std::size_t>(shape_[0]);
    return Tensor(s, std::vector<T>(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Stacks equally-shaped tensors along a new leading dimension (or concatenates
// along dim 0 when the inputs already carry a batch dimension of 1).
template <class T>
Tensor<T> concat0(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat0 of nothing");
  Shape s = parts[0].shape();
  int n = 0;
  for (const auto& p : parts) {
    if (p.rank() != s.size()) throw ShapeError("concat0 rank mismatch");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (p.shape()[i] != s[i]) throw ShapeError("concat0 " + shape_str(p.shape()) + " vs " + shape_str(s));
    n += p.shape()[0];
  }
  s[0] = n;
  std::vector<T> data;
  data.reserve(numel_of(s));
  for (const auto& p : parts) data.insert(data.end(), p.vec().begin(), p.vec().end());
  return Tensor<T>(std::move(s), std::move(data));
}

template <class T>
Tensor<T> concat0(const std::vector<Tensor<T>>& parts) {
  return concat0(std::span<const Tensor<T>>(parts));
}

}  // namespace studa
