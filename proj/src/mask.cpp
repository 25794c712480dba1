#include "driu/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace driu {

Mask::Mask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw ShapeError("mask extents must be >= 1");
  if (fill > 1) throw InvalidArgument("mask fill must be 0 or 1");
  values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 1 || width < 1) throw ShapeError("mask extents must be >= 1");
  if (values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("mask value count does not match " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (std::any_of(values_.begin(), values_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument("mask values must be 0 or 1");
  }
}

Mask Mask::from_tensor(const Tensor& t) {
  int height = 0, width = 0;
  if (t.rank() == 3 && t.dim(0) == 1) {
    height = t.dim(1);
    width = t.dim(2);
  } else if (t.rank() == 2) {
    height = t.dim(0);
    width = t.dim(1);
  } else {
    throw ShapeError("mask tensor must be (1,H,W) or (H,W), got " + shape_to_string(t.shape()));
  }
  std::vector<std::uint8_t> values(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 0.0f) {
      values[i] = 0;
    } else if (t[i] == 1.0f) {
      values[i] = 1;
    } else {
      throw InvalidArgument("mask tensor is not binary at index " + std::to_string(i));
    }
  }
  return Mask(height, width, std::move(values));
}

Tensor Mask::to_tensor() const {
  Tensor t(Shape{1, height_, width_});
  for (std::size_t i = 0; i < values_.size(); ++i) t[i] = values_[i] ? 1.0f : 0.0f;
  return t;
}

std::size_t Mask::count_foreground() const noexcept {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

Mask Mask::complement() const {
  Mask out = *this;
  for (auto& v : out.values_) v = static_cast<std::uint8_t>(1 - v);
  return out;
}

}  // namespace driu
