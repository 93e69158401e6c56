#include "usvis/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace usvis {
namespace {

ScalarGrid checked_grid(Dims dims, std::vector<float> data) {
  if (data.size() != dims.voxel_count()) {
    throw Error(ErrorCode::InvalidVolume, "sample count " + std::to_string(data.size()) +
                                              " does not match dims " + std::to_string(dims.nx) + "x" +
                                              std::to_string(dims.ny) + "x" + std::to_string(dims.nz));
  }
  return ScalarGrid(dims, std::move(data));
}

}  // namespace

std::size_t Dims::min_extent() const noexcept { return std::min({nx, ny, nz}); }

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> data)
    : grid_(checked_grid(dims, std::move(data))), spacing_(spacing) {
  validate();
}

Volume::Volume(ScalarGrid grid, Spacing spacing) : grid_(std::move(grid)), spacing_(spacing) {
  validate();
}

Volume Volume::filled(Dims dims, float value, Spacing spacing) {
  return Volume(ScalarGrid(dims, value), spacing);
}

void Volume::validate() const {
  const Dims& d = grid_.dims();
  if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
    throw Error(ErrorCode::InvalidVolume, "volume dims must be positive");
  }
  if (!(spacing_.sx > 0.0f && spacing_.sy > 0.0f && spacing_.sz > 0.0f) ||
      !std::isfinite(spacing_.sx) || !std::isfinite(spacing_.sy) || !std::isfinite(spacing_.sz)) {
    throw Error(ErrorCode::InvalidVolume, "voxel spacing must be positive and finite");
  }
  const auto values = grid_.values();
  const auto bad = std::find_if(values.begin(), values.end(),
                                [](float v) { return !(v >= 0.0f && v <= 1.0f); });
  if (bad != values.end()) {
    std::ostringstream msg;
    msg << "sample " << (bad - values.begin()) << " = " << *bad << " is outside [0,1]";
    throw Error(ErrorCode::InvalidVolume, msg.str());
  }
}

namespace {

template <typename T>
Volume normalize_by_max_impl(const Grid3<T>& grid, Spacing spacing) {
  double peak = 0.0;
  for (T v : grid.values()) peak = std::max(peak, static_cast<double>(v));
  ScalarGrid out(grid.dims());
  if (peak > 0.0) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double v = std::max(0.0, static_cast<double>(grid[i])) / peak;
      out[i] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
    }
  }
  return Volume(std::move(out), spacing);
}

}  // namespace

Volume normalize_by_max(const ScalarGrid& grid, Spacing spacing) {
  return normalize_by_max_impl(grid, spacing);
}

Volume normalize_by_max(const Grid3<double>& grid, Spacing spacing) {
  return normalize_by_max_impl(grid, spacing);
}

}  // namespace usvis
