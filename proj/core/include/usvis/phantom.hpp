#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "usvis/volume.hpp"

namespace usvis {

enum class PhantomKind { Cylinder, Sphere, Ramp, Step, Noisy };

PhantomKind parse_phantom_kind(std::string_view text);
std::string_view to_string(PhantomKind kind) noexcept;

/// Analytic test volumes.
///
///   cylinder  voxels within `radius` of a line through `center` along `axis`
///   sphere    voxels within `radius` of `center`
///   ramp      coordinate / (n - 1) along `axis`, scaled into [background, foreground]
///   step      foreground where coordinate >= `edge`, background elsewhere
///   noisy     `base` phantom times (1 + eta), eta ~ U[-amplitude, amplitude],
///             clamped to [0,1]; levels default to 0.2 / 0.8 so the background
///             carries speckle too
///
/// The center defaults to (nx/2, ny/2, nz/2) in voxel coordinates and the step
/// edge to n/2 along the axis. Levels default to 0 / 1.
struct PhantomSpec {
  PhantomKind kind = PhantomKind::Cylinder;
  Dims dims{32, 32, 32};
  double radius = 3.0;
  int axis = 2;  // 0 = x, 1 = y, 2 = z
  std::optional<Vec3> center;
  std::optional<double> edge;
  std::optional<double> background;
  std::optional<double> foreground;
  PhantomKind base = PhantomKind::Cylinder;  // for Noisy
  double noise_amplitude = 0.3;
  std::uint64_t seed = 1;
  Spacing spacing;
};

/// Throws BadGeometry for empty dims, non-positive radius, an axis outside
/// 0..2, levels outside [0,1], an amplitude outside [0,1), or a noisy base.
Volume make_phantom(const PhantomSpec& spec);

/// Multiplicative speckle I * (1 + eta) with a fixed-seed generator.
Volume add_speckle(const Volume& volume, double amplitude, std::uint64_t seed);

/// Membership mask for the cylinder / sphere geometry of a spec (1 inside).
Grid3<std::uint8_t> phantom_mask(const PhantomSpec& spec);

}  // namespace usvis
