#pragma once

#include "usvis/volume.hpp"

namespace usvis {

struct BilateralParams {
  double sigma_spatial = 2.0;  // voxels
  double sigma_range = 0.1;    // intensity units
  int window_radius = 4;       // voxels, cubic window half-width

  /// Throws InvalidArgument unless both sigmas are positive and the window
  /// radius is at least max(1, ceil(2 * sigma_spatial)).
  void validate() const;
};

/// Reference O(N * w^3) evaluation over a truncated cubic window. Windows that
/// cross the border are clipped and their weights renormalized.
Volume bilateral_direct(const Volume& volume, const BilateralParams& params);

/// Range-quantized approximation of bilateral_direct. The intensity axis is
/// sampled at levels no further apart than sigma_range / 5; at each level the
/// range-weighted volume is blurred with the same truncated separable spatial
/// kernel, and every voxel interpolates the two levels bracketing its value.
/// Cost is O(N * levels * w) instead of O(N * w^3).
Volume bilateral_fast(const Volume& volume, const BilateralParams& params);

}  // namespace usvis
