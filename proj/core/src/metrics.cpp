#include "usvis/metrics.hpp"

#include <cmath>
#include <limits>

namespace usvis {

double mse(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) {
    throw Error(ErrorCode::DimsMismatch, "mse needs volumes of identical dims");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += diff * diff;
  }
  return sum / static_cast<double>(a.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

double psnr(const Volume& a, const Volume& b) { return psnr_from_mse(mse(a, b)); }

}  // namespace usvis
