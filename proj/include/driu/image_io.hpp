#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "driu/mask.hpp"
#include "driu/tensor.hpp"

// Binary netpbm codecs: P6 (RGB) for fundus images, P5 (gray) for masks and
// probability maps. 16-bit samples are big-endian as netpbm prescribes.

namespace driu {

struct NetpbmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 for P5, 3 for P6
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // interleaved, row-major

  bool operator==(const NetpbmImage&) const = default;
};

NetpbmImage decode_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_netpbm(const NetpbmImage& image);

NetpbmImage read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const NetpbmImage& image);

// Probabilities are stored as round-half-up(p * 65535), clamped to [1, 65534].
std::uint16_t quantize_probability(double p) noexcept;

/// (3,H,W) tensor with values sample/maxval.
Tensor rgb_from_netpbm(const NetpbmImage& image);
/// 8-bit P6 from a (3,H,W) tensor in [0,1] (clamped, rounded).
NetpbmImage rgb_to_netpbm(const Tensor& image);
// Snaps an RGB tensor to the values an 8-bit write/read cycle produces.
Tensor quantize_rgb(const Tensor& image);

// Foreground iff sample > maxval/2.
Mask mask_from_netpbm(const NetpbmImage& image);
NetpbmImage mask_to_netpbm(const Mask& mask);  // 8-bit, {0,255}

Tensor probability_from_netpbm(const NetpbmImage& image);  // (1,H,W)
NetpbmImage probability_to_netpbm(const Tensor& probability);

Tensor read_rgb_image(const std::filesystem::path& path);
void write_rgb_image(const std::filesystem::path& path, const Tensor& image);
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);
Tensor read_probability_map(const std::filesystem::path& path);
void write_probability_map(const std::filesystem::path& path, const Tensor& probability);

}  // namespace driu
