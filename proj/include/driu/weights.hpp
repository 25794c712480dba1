#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driu/network.hpp"
#include "driu/tensor.hpp"

// Weight file layout (all integers and floats little-endian):
//   "DRIUW1\n"
//   repeated until end of file:
//     u32 name_length, name bytes, u32 rank, u32 dims[rank], f32 payload[prod(dims)]

namespace driu {

inline constexpr std::string_view kWeightMagic = "DRIUW1\n";
inline constexpr std::uint32_t kMaxWeightRank = 8;

using NamedTensors = std::map<std::string, Tensor>;

std::vector<std::uint8_t> save_weights(const NamedTensors& tensors);
std::vector<std::uint8_t> save_weights(const NetworkParams& params);

/// Parses a whole weight file; any truncation, bad magic or implausible
/// header throws FormatError and nothing is returned.
NamedTensors load_weights(std::span<const std::uint8_t> bytes);

}  // namespace driu
