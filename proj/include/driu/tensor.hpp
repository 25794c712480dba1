#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driu/error.hpp"

namespace driu {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);

// Product of extents; throws ShapeError on an empty shape or an extent < 1.
std::size_t checked_element_count(const Shape& shape);

/// Dense row-major array. Images and feature maps use the (C,H,W) layout,
/// convolution weights (O,C,k,k).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{1}, data_(1, T{0}) {}

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(checked_element_count(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != checked_element_count(shape_)) {
      throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                       shape_to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // (C,H,W) accessors; no bounds checks.
  T& at(int c, int y, int x) noexcept { return data_[offset(c, y, x)]; }
  const T& at(int c, int y, int x) const noexcept { return data_[offset(c, y, x)]; }

  int channels() const { return shape_.at(0); }
  int height() const { return shape_.at(1); }
  int width() const { return shape_.at(2); }

  BasicTensor reshape(Shape new_shape) const {
    if (checked_element_count(new_shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(new_shape));
    }
    return BasicTensor(std::move(new_shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const BasicTensor&) const = default;

 private:
  std::size_t offset(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(shape_[2]) +
           static_cast<std::size_t>(x);
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T = float>
BasicTensor<T> zeros(const Shape& shape) {
  return BasicTensor<T>(shape, T{0});
}

// Mixes a seed with a tensor name so every named tensor draws from its own
// stream regardless of creation order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Normal(0, sqrt(2/fan_in)) samples. Deterministic in (seed, key).
template <typename T = float>
BasicTensor<T> he_normal_init(const Shape& shape, int fan_in, std::uint64_t seed, std::string_view key = {});

enum class ElementwiseOp { add, sub, mul };

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  BasicTensor<T> out(a.shape());
  auto lhs = a.data();
  auto rhs = b.data();
  auto dst = out.data();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lhs[i] + rhs[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lhs[i] - rhs[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lhs[i] * rhs[i];
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

// In-place a += b, used for gradient accumulation.
template <typename T>
void accumulate(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("accumulate shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  auto dst = a.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace driu
