#pragma once

#include "usvis/volume.hpp"

namespace usvis {

/// Mean squared sample difference. Throws DimsMismatch.
double mse(const Volume& a, const Volume& b);

/// Peak signal-to-noise ratio in dB for a peak value of 1.
/// Identical inputs give +infinity.
double psnr(const Volume& a, const Volume& b);
double psnr_from_mse(double mse_value);

}  // namespace usvis
