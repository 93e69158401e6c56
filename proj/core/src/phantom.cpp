#include "usvis/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace usvis {
namespace {

void check(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::BadGeometry, message);
}

Vec3 center_of(const PhantomSpec& spec) {
  if (spec.center) return *spec.center;
  return Vec3{static_cast<double>(spec.dims.nx / 2), static_cast<double>(spec.dims.ny / 2),
              static_cast<double>(spec.dims.nz / 2)};
}

double coordinate(std::size_t x, std::size_t y, std::size_t z, int axis) {
  return static_cast<double>(axis == 0 ? x : axis == 1 ? y : z);
}

std::size_t extent(const Dims& d, int axis) { return axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz; }

// Uniform double in [0,1) from the top 53 bits; independent of the standard
// library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

PhantomKind parse_phantom_kind(std::string_view text) {
  if (text == "cylinder") return PhantomKind::Cylinder;
  if (text == "sphere") return PhantomKind::Sphere;
  if (text == "ramp") return PhantomKind::Ramp;
  if (text == "step") return PhantomKind::Step;
  if (text == "noisy") return PhantomKind::Noisy;
  throw Error(ErrorCode::BadGeometry, "unknown phantom kind '" + std::string(text) + "'");
}

std::string_view to_string(PhantomKind kind) noexcept {
  switch (kind) {
    case PhantomKind::Cylinder: return "cylinder";
    case PhantomKind::Sphere: return "sphere";
    case PhantomKind::Ramp: return "ramp";
    case PhantomKind::Step: return "step";
    case PhantomKind::Noisy: return "noisy";
  }
  return "cylinder";
}

Grid3<std::uint8_t> phantom_mask(const PhantomSpec& spec) {
  const Dims d = spec.dims;
  const PhantomKind shape = spec.kind == PhantomKind::Noisy ? spec.base : spec.kind;
  Grid3<std::uint8_t> mask(d, 0);
  const Vec3 c = center_of(spec);
  const double r2 = spec.radius * spec.radius;
  const double edge = spec.edge.value_or(static_cast<double>(extent(d, spec.axis) / 2));
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double dx = static_cast<double>(x) - c.x;
        const double dy = static_cast<double>(y) - c.y;
        const double dz = static_cast<double>(z) - c.z;
        bool inside = false;
        switch (shape) {
          case PhantomKind::Cylinder: {
            const double d2 = spec.axis == 0 ? dy * dy + dz * dz
                              : spec.axis == 1 ? dx * dx + dz * dz
                                               : dx * dx + dy * dy;
            inside = d2 <= r2;
            break;
          }
          case PhantomKind::Sphere: inside = dx * dx + dy * dy + dz * dz <= r2; break;
          case PhantomKind::Step: inside = coordinate(x, y, z, spec.axis) >= edge; break;
          default: break;
        }
        mask(x, y, z) = inside ? 1 : 0;
      }
    }
  }
  return mask;
}

Volume make_phantom(const PhantomSpec& spec) {
  const Dims d = spec.dims;
  check(d.nx > 0 && d.ny > 0 && d.nz > 0, "phantom dims must be positive");
  check(spec.axis >= 0 && spec.axis <= 2, "axis must be 0, 1 or 2");
  check(spec.radius > 0.0 && std::isfinite(spec.radius), "radius must be positive");
  const bool noisy = spec.kind == PhantomKind::Noisy;
  check(!noisy || spec.base != PhantomKind::Noisy, "noisy phantom needs a non-noisy base");
  const double bg = spec.background.value_or(noisy ? 0.2 : 0.0);
  const double fg = spec.foreground.value_or(noisy ? 0.8 : 1.0);
  check(bg >= 0.0 && bg <= 1.0 && fg >= 0.0 && fg <= 1.0, "levels must lie in [0,1]");
  check(spec.noise_amplitude >= 0.0 && spec.noise_amplitude < 1.0, "noise amplitude must be in [0,1)");

  const PhantomKind shape = noisy ? spec.base : spec.kind;
  ScalarGrid grid(d);
  if (shape == PhantomKind::Ramp) {
    const std::size_t n = extent(d, spec.axis);
    for (std::size_t z = 0; z < d.nz; ++z) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const double t = n > 1 ? coordinate(x, y, z, spec.axis) / static_cast<double>(n - 1) : 0.0;
          grid(x, y, z) = static_cast<float>(bg + (fg - bg) * t);
        }
      }
    }
  } else {
    const auto mask = phantom_mask(spec);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<float>(mask[i] ? fg : bg);
  }
  Volume clean(std::move(grid), spec.spacing);
  return noisy ? add_speckle(clean, spec.noise_amplitude, spec.seed) : clean;
}

Volume add_speckle(const Volume& volume, double amplitude, std::uint64_t seed) {
  check(amplitude >= 0.0 && amplitude < 1.0, "noise amplitude must be in [0,1)");
  std::mt19937_64 rng(seed);
  std::vector<float> out(volume.size());
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const double eta = amplitude * (2.0 * unit_uniform(rng) - 1.0);
    out[i] = static_cast<float>(std::clamp(volume[i] * (1.0 + eta), 0.0, 1.0));
  }
  return Volume(volume.dims(), volume.spacing(), std::move(out));
}

}  // namespace usvis
