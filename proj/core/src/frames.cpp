#include "usvis/frames.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "usvis/error.hpp"

namespace usvis {

bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ie = i;
      std::size_t je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string_view na(a.data() + i, ie - i);
      std::string_view nb(b.data() + j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

Volume ingest_frames(const FrameStack& stack) {
  if (stack.frames.size() < 2) {
    throw Error(ErrorCode::EmptyStack,
                "need at least 2 frames, got " + std::to_string(stack.frames.size()));
  }
  const std::size_t width = stack.frames.front().width;
  const std::size_t height = stack.frames.front().height;
  if (width == 0 || height == 0) throw Error(ErrorCode::MismatchedFrameSize, "frame 0 is empty");
  for (std::size_t k = 0; k < stack.frames.size(); ++k) {
    const GrayImage& frame = stack.frames[k];
    if (frame.width != width || frame.height != height) {
      throw Error(ErrorCode::MismatchedFrameSize,
                  "frame " + std::to_string(k) + " is " + std::to_string(frame.width) + "x" +
                      std::to_string(frame.height) + ", expected " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    if (frame.pixels.size() != width * height) {
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(k) + " pixel count mismatch");
    }
    if (frame.bit_depth != 8 && frame.bit_depth != 16) {
      throw Error(ErrorCode::UnsupportedPixelFormat, "frame " + std::to_string(k) + " bit depth");
    }
  }

  const Dims dims{width, height, stack.frames.size()};
  std::vector<float> data(dims.voxel_count());
  for (std::size_t k = 0; k < stack.frames.size(); ++k) {
    const GrayImage& frame = stack.frames[k];
    const float scale = 1.0f / static_cast<float>(frame.max_value());
    float* slice = data.data() + k * width * height;
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
      slice[i] = std::min(1.0f, static_cast<float>(frame.pixels[i]) * scale);
    }
  }
  return Volume(dims, Spacing{stack.pixel_spacing_x, stack.pixel_spacing_y, stack.slice_spacing},
                std::move(data));
}

FrameStack read_frame_directory(const std::filesystem::path& directory, Spacing spacing) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) {
    throw Error(ErrorCode::IoError, "frame directory " + directory.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });

  FrameStack stack;
  stack.pixel_spacing_x = spacing.sx;
  stack.pixel_spacing_y = spacing.sy;
  stack.slice_spacing = spacing.sz;
  stack.frames.reserve(files.size());
  for (const auto& file : files) stack.frames.push_back(read_gray_png(file));
  return stack;
}

}  // namespace usvis
