#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "driu/tensor.hpp"

namespace driu {

/// Strictly binary (H,W) mask. Used for gold standards, second-annotator
/// masks, fields of view and binarized predictions.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);
  Mask(int height, int width, std::vector<std::uint8_t> values);

  // Accepts a (1,H,W) or (H,W) tensor holding only 0 and 1.
  static Mask from_tensor(const Tensor& t);
  Tensor to_tensor() const;  // (1,H,W)

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::uint8_t operator[](std::size_t i) const noexcept { return values_[i]; }
  std::uint8_t at(int y, int x) const noexcept { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool on) noexcept { values_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0; }
  void set(std::size_t i, bool on) noexcept { values_[i] = on ? 1 : 0; }

  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  std::size_t count_foreground() const noexcept;
  bool same_size(const Mask& other) const noexcept { return height_ == other.height_ && width_ == other.width_; }
  Mask complement() const;

  bool operator==(const Mask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

}  // namespace driu
