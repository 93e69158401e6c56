#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "usvis/fusion.hpp"
#include "usvis/png_io.hpp"
#include "usvis/volume.hpp"

namespace usvis {

/// Orthographic camera looking down the view -z axis at the volume center.
///
/// The volume is rotated by rx, ry, rz degrees about axes through its center,
/// applied in x, then y, then z order (R = Rz * Ry * Rx). The image spans the
/// largest physical extent of the volume divided by zoom; at zoom 1 with an
/// isotropic n^3 volume and an n x n image, identity-rotation pixels sit on
/// voxel columns.
struct Camera {
  std::array<double, 3> rotation_deg{0.0, 0.0, 0.0};
  std::size_t width = 256;
  std::size_t height = 256;
  double zoom = 1.0;
  double step = 0.5;  // ray step in voxels of the finest spacing
};

enum class RenderMode { MipGray, MipColor, Composite };

RenderMode parse_render_mode(std::string_view text);
std::string_view to_string(RenderMode mode) noexcept;

struct Rgba {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
  float a = 0.0f;
};

/// Straight (non-premultiplied) RGBA raster, row-major, top row first.
struct RenderedImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgba> pixels;

  Rgba& at(std::size_t x, std::size_t y) noexcept { return pixels[y * width + x]; }
  const Rgba& at(std::size_t x, std::size_t y) const noexcept { return pixels[y * width + x]; }
};

/// Front-to-back accumulator:
///   C += (1 - A) * alpha * c,  A += (1 - A) * alpha
struct Compositor {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double a = 0.0;

  static constexpr double kTerminationAlpha = 0.99;

  void add(double alpha, const Rgb& color) noexcept;
  bool saturated() const noexcept { return a > kTerminationAlpha; }
  Rgba straight() const noexcept;
};

/// Opacity correction for a step measured in reference-step units (1 voxel).
double corrected_alpha(double opacity, double step_ratio) noexcept;

/// Maximum intensity projection; gray output, alpha 1 on every pixel.
RenderedImage render_mip(const Volume& volume, const Camera& camera);

/// MipGray: gray = max O_e along the ray, alpha 1.
/// MipColor: color of the sample maximizing O_e, alpha = that O_e.
/// Composite: front-to-back compositing with early termination.
/// Sample colors are interpolated with corner weights scaled by opacity.
RenderedImage render_fused(const FusedVolume& fused, const Camera& camera, RenderMode mode);

/// channel -> round(clamp(c) * 255)
Rgba8Image quantize(const RenderedImage& image);
std::vector<std::byte> encode_png(const RenderedImage& image);
void write_png(const RenderedImage& image, const std::filesystem::path& path);

}  // namespace usvis
