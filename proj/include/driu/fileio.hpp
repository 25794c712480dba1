#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace driu {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes through a temporary sibling file and renames it over `path`, so a
/// failure never leaves a partial file at the destination.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace driu
