#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace usvis {

/// Single-channel image with 8 or 16 significant bits per pixel.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;  // row-major, top row first

  std::uint16_t max_value() const noexcept { return bit_depth == 16 ? 65535 : 255; }
};

struct Rgba8Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // RGBA interleaved, row-major
};

/// Decodes an 8- or 16-bit grayscale PNG without any gamma or bit-depth
/// transformation. Other color types are rejected.
GrayImage decode_gray_png(std::span<const std::byte> bytes);
GrayImage read_gray_png(const std::filesystem::path& path);
std::vector<std::byte> encode_gray_png(const GrayImage& image);

std::vector<std::byte> encode_rgba_png(const Rgba8Image& image);
Rgba8Image decode_rgba_png(std::span<const std::byte> bytes);

}  // namespace usvis
