#pragma once

#include <cmath>
#include <vector>

#include "usvis/grid.hpp"

namespace usvis {

/// Physical size of one voxel in millimeters.
struct Spacing {
  float sx = 1.0f;
  float sy = 1.0f;
  float sz = 1.0f;

  bool operator==(const Spacing&) const = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Immutable scalar volume. Samples are finite, normalized to [0,1] and
/// stored x-fastest, then y, then z.
class Volume {
 public:
  Volume(Dims dims, Spacing spacing, std::vector<float> data);
  Volume(ScalarGrid grid, Spacing spacing);

  static Volume filled(Dims dims, float value, Spacing spacing = {});

  const Dims& dims() const noexcept { return grid_.dims(); }
  const Spacing& spacing() const noexcept { return spacing_; }
  const ScalarGrid& grid() const noexcept { return grid_; }
  std::span<const float> values() const noexcept { return grid_.values(); }
  std::size_t size() const noexcept { return grid_.size(); }

  float operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return grid_(x, y, z);
  }
  float operator[](std::size_t i) const noexcept { return grid_[i]; }

  bool operator==(const Volume&) const = default;

 private:
  void validate() const;

  ScalarGrid grid_;
  Spacing spacing_;
};

/// Divides a nonnegative grid by its global maximum. An all-zero grid stays
/// all zero.
Volume normalize_by_max(const ScalarGrid& grid, Spacing spacing = {});
Volume normalize_by_max(const Grid3<double>& grid, Spacing spacing = {});

/// Trilinear interpolation at a continuous voxel-space point. Points outside
/// [0,n-1] on any axis sample as 0.
template <typename T>
inline double trilinear(const Grid3<T>& grid, double x, double y, double z) noexcept {
  const Dims& d = grid.dims();
  const double mx = static_cast<double>(d.nx - 1);
  const double my = static_cast<double>(d.ny - 1);
  const double mz = static_cast<double>(d.nz - 1);
  if (!(x >= 0.0 && y >= 0.0 && z >= 0.0 && x <= mx && y <= my && z <= mz)) {
    return 0.0;
  }
  std::size_t x0 = static_cast<std::size_t>(x);
  std::size_t y0 = static_cast<std::size_t>(y);
  std::size_t z0 = static_cast<std::size_t>(z);
  // Keep the upper corner in range when the point sits on the far face.
  if (x0 + 1 >= d.nx) x0 = d.nx > 1 ? d.nx - 2 : 0;
  if (y0 + 1 >= d.ny) y0 = d.ny > 1 ? d.ny - 2 : 0;
  if (z0 + 1 >= d.nz) z0 = d.nz > 1 ? d.nz - 2 : 0;
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double fz = z - static_cast<double>(z0);
  const std::size_t sx = d.nx > 1 ? 1 : 0;
  const std::size_t sy = d.ny > 1 ? d.nx : 0;
  const std::size_t sz = d.nz > 1 ? d.nx * d.ny : 0;
  const std::size_t i = d.index(x0, y0, z0);

  const double c000 = grid[i];
  const double c100 = grid[i + sx];
  const double c010 = grid[i + sy];
  const double c110 = grid[i + sx + sy];
  const double c001 = grid[i + sz];
  const double c101 = grid[i + sx + sz];
  const double c011 = grid[i + sy + sz];
  const double c111 = grid[i + sx + sy + sz];

  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

inline double trilinear_sample(const Volume& volume, Vec3 point) noexcept {
  return trilinear(volume.grid(), point.x, point.y, point.z);
}

}  // namespace usvis
