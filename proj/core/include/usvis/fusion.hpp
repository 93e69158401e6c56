#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "usvis/features.hpp"

namespace usvis {

/// Feature color in HSL without the lightness channel.
struct HueSaturation {
  double hue = 0.0;         // degrees, [0, 360)
  double saturation = 0.0;  // [0, 1]
};

/// User-steered knobs for one feature.
struct FeatureWeight {
  std::string name;
  double weight = 0.0;  // k_j
  HueSaturation color;
};

/// Per-feature weights and colors plus the global opacity gain.
///
/// Weights are keyed by feature name. They are normalized against the
/// features actually present when fusing, so a params object naming only
/// "frangi" is valid for a set holding sobel, gvf and frangi (the others get
/// weight 0 and the default palette color).
struct FusionParams {
  std::vector<FeatureWeight> features;
  double gain = 1.0;  // K

  const FeatureWeight* find(const std::string& name) const noexcept;

  /// Uniform weights and the default palette over the given names.
  static FusionParams uniform(const std::vector<std::string>& names, double gain = 1.0);
};

/// Default palette: frangi red, sobel cyan, gvf yellow, anything else gray.
HueSaturation default_color(const std::string& feature_name);

/// raw_j / sum(raw). Throws AllZeroWeights when nothing is positive and
/// InvalidArgument on negative or non-finite entries.
std::vector<double> normalize_weights(std::span<const double> raw);

/// Weights and colors aligned with a feature set's order, weights normalized.
struct ResolvedParams {
  std::vector<double> weights;
  std::vector<HueSaturation> colors;
  double gain = 1.0;
};

/// Throws UnknownFeature when params name a feature the set lacks,
/// AllZeroWeights when every present feature has weight 0, NegativeGain.
ResolvedParams resolve_params(const FeatureSet& features, const FusionParams& params);

/// Per-feature importance factors (n * k_j)^2.
std::vector<double> importance_factors(std::span<const double> weights);

/// k(s) = sum X_j (n k_j)^2 / sum X_j, zero where sum X_j = 0.
double importance_at(std::span<const double> x, std::span<const double> weights);

struct Hsl {
  double hue = 0.0;
  double saturation = 0.0;
  double lightness = 0.0;
};

struct Rgb {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
};

/// Weighted HSL combination at one voxel with omega_j = X_j (n k_j)^2.
/// Saturation is the omega-weighted mean; hue is the (omega * saturation)-
/// weighted linear mean. Empty support yields an achromatic color.
Hsl combine_color_at(std::span<const double> x, std::span<const double> weights,
                     std::span<const HueSaturation> colors, double lightness);

Rgb hsl_to_rgb(const Hsl& hsl);

/// O_e = clamp(O_d * (1 + K ln(n k + 1)), 0, 1).
double enhanced_opacity(double base_opacity, double importance, std::size_t feature_count,
                        double gain);

/// Grid forms of the per-voxel operations above.
ScalarGrid importance(const FeatureSet& features, std::span<const double> weights);
Grid3<Rgb> combine_color(const FeatureSet& features, const ResolvedParams& params,
                         const Volume& base_intensity);
ScalarGrid opacity(const Volume& base, const Volume& gradient_magnitude, const ScalarGrid& importance,
                   std::size_t feature_count, double gain);

/// Per-voxel importance, opacity and RGB color ready for projection.
struct FusedVolume {
  ScalarGrid importance;
  ScalarGrid base_opacity;  // O_d
  ScalarGrid opacity;       // O_e
  Grid3<Rgb> color;
  Spacing spacing;

  const Dims& dims() const noexcept { return opacity.dims(); }
};

/// Gradient magnitude comes from the "sobel" feature, computed from the
/// volume when the set lacks one.
FusedVolume fuse(const Volume& volume, const FeatureSet& features, const FusionParams& params);

}  // namespace usvis
