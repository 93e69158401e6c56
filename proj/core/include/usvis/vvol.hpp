#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "usvis/volume.hpp"

namespace usvis {

// VVOL layout (little-endian):
//   0..3   "VVOL"
//   4      version (1)
//   5      dtype (0 = float32)
//   6..7   reserved, zero
//   8..19  nx, ny, nz as uint32
//   20..31 sx, sy, sz as float32
//   32..   nx*ny*nz float32 samples, x-fastest
inline constexpr std::size_t kVvolHeaderSize = 32;
inline constexpr std::uint8_t kVvolVersion = 1;
inline constexpr std::uint8_t kVvolDtypeFloat32 = 0;

std::vector<std::byte> encode_vvol(const Volume& volume);
Volume decode_vvol(std::span<const std::byte> bytes);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a file with a valid magic behind.
void write_vvol(const Volume& volume, const std::filesystem::path& path);
Volume read_vvol(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace usvis
