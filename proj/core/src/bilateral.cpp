#include "usvis/bilateral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace usvis {
namespace {

// Range levels per sigma_range for the fast variant.
constexpr double kLevelsPerSigma = 5.0;

std::vector<double> spatial_taps(double sigma, int radius) {
  std::vector<double> taps(2 * radius + 1);
  for (int d = -radius; d <= radius; ++d) {
    taps[d + radius] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return taps;
}

enum class Axis { X, Y, Z };

// Truncated 1D convolution along one axis; out-of-range taps are skipped.
void convolve_axis(const Grid3<double>& in, Grid3<double>& out, const std::vector<double>& taps,
                   Axis axis) {
  const Dims d = in.dims();
  const int radius = static_cast<int>(taps.size() / 2);
  const std::ptrdiff_t n = axis == Axis::X ? d.nx : axis == Axis::Y ? d.ny : d.nz;
  const std::size_t stride = axis == Axis::X ? 1 : axis == Axis::Y ? d.nx : d.nx * d.ny;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t z = 0; z < static_cast<std::ptrdiff_t>(d.nz); ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, static_cast<std::size_t>(z));
        const std::ptrdiff_t c = axis == Axis::X   ? static_cast<std::ptrdiff_t>(x)
                                 : axis == Axis::Y ? static_cast<std::ptrdiff_t>(y)
                                                   : z;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-radius, -c);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(radius, n - 1 - c);
        double acc = 0.0;
        for (std::ptrdiff_t k = lo; k <= hi; ++k) {
          acc += taps[k + radius] * in[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) +
                                                                k * static_cast<std::ptrdiff_t>(stride))];
        }
        out[i] = acc;
      }
    }
  }
}

void blur(Grid3<double>& grid, Grid3<double>& scratch, const std::vector<double>& taps) {
  convolve_axis(grid, scratch, taps, Axis::X);
  convolve_axis(scratch, grid, taps, Axis::Y);
  convolve_axis(grid, scratch, taps, Axis::Z);
  std::swap(grid, scratch);
}

}  // namespace

void BilateralParams::validate() const {
  std::ostringstream msg;
  if (!(sigma_spatial > 0.0) || !std::isfinite(sigma_spatial)) {
    msg << "sigma_spatial must be positive (got " << sigma_spatial << ")";
  } else if (!(sigma_range > 0.0) || !std::isfinite(sigma_range)) {
    msg << "sigma_range must be positive (got " << sigma_range << ")";
  } else if (window_radius < 1) {
    msg << "window_radius must be >= 1 (got " << window_radius << ")";
  } else if (window_radius < static_cast<int>(std::ceil(2.0 * sigma_spatial))) {
    msg << "window_radius " << window_radius << " does not cover 2 * sigma_spatial = "
        << 2.0 * sigma_spatial;
  } else {
    return;
  }
  throw Error(ErrorCode::InvalidArgument, msg.str());
}

Volume bilateral_direct(const Volume& volume, const BilateralParams& params) {
  params.validate();
  const Dims d = volume.dims();
  const int r = params.window_radius;
  const int w = 2 * r + 1;
  std::vector<double> spatial(static_cast<std::size_t>(w) * w * w);
  for (int dz = -r; dz <= r; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        spatial[((dz + r) * w + (dy + r)) * w + (dx + r)] =
            std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * params.sigma_spatial * params.sigma_spatial));
      }
    }
  }
  const double range_coeff = -1.0 / (2.0 * params.sigma_range * params.sigma_range);
  const auto in = volume.values();
  const auto lo_hi = std::minmax_element(in.begin(), in.end());
  const float lo = *lo_hi.first;
  const float hi = *lo_hi.second;

  std::vector<float> out(volume.size());
  const auto nx = static_cast<std::ptrdiff_t>(d.nx);
  const auto ny = static_cast<std::ptrdiff_t>(d.ny);
  const auto nz = static_cast<std::ptrdiff_t>(d.nz);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t z = 0; z < nz; ++z) {
    for (std::ptrdiff_t y = 0; y < ny; ++y) {
      for (std::ptrdiff_t x = 0; x < nx; ++x) {
        const double center = in[d.index(x, y, z)];
        double num = 0.0;
        double den = 0.0;
        for (std::ptrdiff_t qz = std::max<std::ptrdiff_t>(0, z - r); qz <= std::min(nz - 1, z + r); ++qz) {
          for (std::ptrdiff_t qy = std::max<std::ptrdiff_t>(0, y - r); qy <= std::min(ny - 1, y + r); ++qy) {
            const double* srow = &spatial[((qz - z + r) * w + (qy - y + r)) * w];
            const float* irow = &in[d.index(0, qy, qz)];
            for (std::ptrdiff_t qx = std::max<std::ptrdiff_t>(0, x - r); qx <= std::min(nx - 1, x + r); ++qx) {
              const double value = irow[qx];
              const double diff = value - center;
              const double weight = srow[qx - x + r] * std::exp(diff * diff * range_coeff);
              num += weight * value;
              den += weight;
            }
          }
        }
        out[d.index(x, y, z)] = std::clamp(static_cast<float>(num / den), lo, hi);
      }
    }
  }
  return Volume(d, volume.spacing(), std::move(out));
}

Volume bilateral_fast(const Volume& volume, const BilateralParams& params) {
  params.validate();
  const Dims d = volume.dims();
  const auto in = volume.values();
  const auto lo_hi = std::minmax_element(in.begin(), in.end());
  const double lo = *lo_hi.first;
  const double hi = *lo_hi.second;
  if (hi - lo <= 0.0) return volume;

  const auto intervals = static_cast<std::size_t>(
      std::max(1.0, std::ceil((hi - lo) * kLevelsPerSigma / params.sigma_range)));
  const double level_step = (hi - lo) / static_cast<double>(intervals);
  const double range_coeff = -1.0 / (2.0 * params.sigma_range * params.sigma_range);
  const auto taps = spatial_taps(params.sigma_spatial, params.window_radius);

  // Interval index and fraction of every voxel on the level axis.
  std::vector<std::uint32_t> bin(volume.size());
  std::vector<double> frac(volume.size());
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const double t = (in[i] - lo) / level_step;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(t), intervals - 1);
    bin[i] = static_cast<std::uint32_t>(k);
    frac[i] = t - static_cast<double>(k);
  }

  Grid3<double> previous(d);
  Grid3<double> current(d);
  Grid3<double> weighted(d);
  Grid3<double> weights(d);
  Grid3<double> scratch(d);
  std::vector<float> out(volume.size());

  for (std::size_t level = 0; level <= intervals; ++level) {
    const double level_value = lo + level_step * static_cast<double>(level);
    for (std::size_t i = 0; i < volume.size(); ++i) {
      const double diff = in[i] - level_value;
      const double w = std::exp(diff * diff * range_coeff);
      weights[i] = w;
      weighted[i] = w * in[i];
    }
    blur(weighted, scratch, taps);
    blur(weights, scratch, taps);
    for (std::size_t i = 0; i < volume.size(); ++i) {
      current[i] = weights[i] > 0.0 ? weighted[i] / weights[i] : static_cast<double>(in[i]);
    }
    if (level > 0) {
      const auto target = static_cast<std::uint32_t>(level - 1);
      for (std::size_t i = 0; i < volume.size(); ++i) {
        if (bin[i] != target) continue;
        const double v = previous[i] + frac[i] * (current[i] - previous[i]);
        out[i] = static_cast<float>(std::clamp(v, lo, hi));
      }
    }
    std::swap(previous, current);
  }
  return Volume(d, volume.spacing(), std::move(out));
}

}  // namespace usvis
