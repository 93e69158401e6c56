#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "usvis/png_io.hpp"
#include "usvis/volume.hpp"

namespace usvis {

/// Ordered, equally sized, parallel and equally spaced 2D frames.
struct FrameStack {
  std::vector<GrayImage> frames;
  float pixel_spacing_x = 1.0f;
  float pixel_spacing_y = 1.0f;
  float slice_spacing = 1.0f;
};

/// Stacks frames along z. Frame k becomes z-slice k and each pixel is divided
/// by its frame's maximum representable value.
Volume ingest_frames(const FrameStack& stack);

/// Filename order with digit runs compared numerically ("f2" < "f10").
bool natural_less(const std::string& a, const std::string& b);

/// Loads every *.png in a directory, ordered by filename.
FrameStack read_frame_directory(const std::filesystem::path& directory, Spacing spacing = {});

}  // namespace usvis
