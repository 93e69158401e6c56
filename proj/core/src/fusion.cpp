#include "usvis/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace usvis {
namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) throw Error(ErrorCode::DimsMismatch, std::string(what) + " dims differ");
}

// Feature samples at one voxel, in set order.
class VoxelGather {
 public:
  explicit VoxelGather(const FeatureSet& set) {
    for (const auto& f : set.features()) sources_.push_back(f.data.values().data());
    values_.resize(sources_.size());
  }
  std::span<const double> at(std::size_t i) {
    for (std::size_t j = 0; j < sources_.size(); ++j) values_[j] = sources_[j][i];
    return values_;
  }

 private:
  std::vector<const float*> sources_;
  std::vector<double> values_;
};

}  // namespace

const FeatureWeight* FusionParams::find(const std::string& name) const noexcept {
  for (const auto& f : features) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

FusionParams FusionParams::uniform(const std::vector<std::string>& names, double gain) {
  FusionParams params;
  params.gain = gain;
  const double w = names.empty() ? 0.0 : 1.0 / static_cast<double>(names.size());
  for (const auto& name : names) params.features.push_back({name, w, default_color(name)});
  return params;
}

HueSaturation default_color(const std::string& feature_name) {
  if (feature_name == kFrangiFeature) return {0.0, 0.9};
  if (feature_name == kSobelFeature) return {180.0, 0.7};
  if (feature_name == kGvfFeature) return {60.0, 0.7};
  return {0.0, 0.0};
}

std::vector<double> normalize_weights(std::span<const double> raw) {
  double sum = 0.0;
  for (double r : raw) {
    if (!std::isfinite(r) || r < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "weights must be finite and nonnegative");
    }
    sum += r;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::AllZeroWeights, "at least one weight must be positive");
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) out[j] = raw[j] / sum;
  return out;
}

ResolvedParams resolve_params(const FeatureSet& features, const FusionParams& params) {
  if (features.size() == 0) throw Error(ErrorCode::InvalidArgument, "feature set is empty");
  if (!std::isfinite(params.gain)) throw Error(ErrorCode::InvalidArgument, "gain must be finite");
  if (params.gain < 0.0) throw Error(ErrorCode::NegativeGain, "gain must be >= 0");
  for (const auto& p : params.features) {
    if (features.find(p.name) == nullptr) {
      throw Error(ErrorCode::UnknownFeature, "params name feature '" + p.name + "' which the set lacks");
    }
  }
  ResolvedParams resolved;
  resolved.gain = params.gain;
  std::vector<double> raw;
  for (const auto& f : features.features()) {
    const FeatureWeight* p = params.find(f.name);
    raw.push_back(p ? p->weight : 0.0);
    HueSaturation color = p ? p->color : default_color(f.name);
    if (!std::isfinite(color.hue)) throw Error(ErrorCode::InvalidArgument, "hue must be finite");
    color.hue = std::fmod(color.hue, 360.0);
    if (color.hue < 0.0) color.hue += 360.0;
    if (!(color.saturation >= 0.0 && color.saturation <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "saturation of '" + f.name + "' must be in [0,1]");
    }
    resolved.colors.push_back(color);
  }
  resolved.weights = normalize_weights(raw);
  return resolved;
}

std::vector<double> importance_factors(std::span<const double> weights) {
  const double n = static_cast<double>(weights.size());
  std::vector<double> out(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double t = n * weights[j];
    out[j] = t * t;
  }
  return out;
}

double importance_at(std::span<const double> x, std::span<const double> weights) {
  const double n = static_cast<double>(weights.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double t = n * weights[j];
    num += x[j] * t * t;
    den += x[j];
  }
  return den > 0.0 ? num / den : 0.0;
}

Hsl combine_color_at(std::span<const double> x, std::span<const double> weights,
                     std::span<const HueSaturation> colors, double lightness) {
  const double n = static_cast<double>(weights.size());
  double omega_sum = 0.0;
  double sat_sum = 0.0;
  double hue_sum = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double t = n * weights[j];
    const double omega = x[j] * t * t;
    omega_sum += omega;
    sat_sum += omega * colors[j].saturation;
    hue_sum += omega * colors[j].saturation * colors[j].hue;
  }
  Hsl out;
  out.lightness = lightness;
  if (omega_sum > 0.0) out.saturation = sat_sum / omega_sum;
  if (sat_sum > 0.0) out.hue = hue_sum / sat_sum;
  return out;
}

Rgb hsl_to_rgb(const Hsl& hsl) {
  const double l = std::clamp(hsl.lightness, 0.0, 1.0);
  const double s = std::clamp(hsl.saturation, 0.0, 1.0);
  double h = hsl.hue;
  if (!(h >= 0.0 && h < 360.0)) {
    h = std::fmod(h, 360.0);
    if (h < 0.0) h += 360.0;
  }
  const double chroma = (1.0 - std::abs(2.0 * l - 1.0)) * s;
  const double sector = h / 60.0;
  // Exact for sector in [0, 6], same as fmod(sector, 2).
  const double x = chroma * (1.0 - std::abs(sector - 2.0 * std::floor(0.5 * sector) - 1.0));
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  switch (static_cast<int>(sector)) {
    case 0: r = chroma; g = x; break;
    case 1: r = x; g = chroma; break;
    case 2: g = chroma; b = x; break;
    case 3: g = x; b = chroma; break;
    case 4: r = x; b = chroma; break;
    default: r = chroma; b = x; break;
  }
  const double m = l - chroma / 2.0;
  auto channel = [m](double c) { return static_cast<float>(std::clamp(c + m, 0.0, 1.0)); };
  return Rgb{channel(r), channel(g), channel(b)};
}

double enhanced_opacity(double base_opacity, double importance, std::size_t feature_count,
                        double gain) {
  if (gain == 0.0) return std::clamp(base_opacity, 0.0, 1.0);
  const double boost = 1.0 + gain * std::log(static_cast<double>(feature_count) * importance + 1.0);
  return std::clamp(base_opacity * boost, 0.0, 1.0);
}

ScalarGrid importance(const FeatureSet& features, std::span<const double> weights) {
  if (weights.size() != features.size()) {
    throw Error(ErrorCode::InvalidArgument, "weight count does not match feature count");
  }
  ScalarGrid out(features.source_dims());
  VoxelGather gather(features);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(importance_at(gather.at(i), weights));
  }
  return out;
}

Grid3<Rgb> combine_color(const FeatureSet& features, const ResolvedParams& params,
                         const Volume& base_intensity) {
  require_same_dims(features.source_dims(), base_intensity.dims(), "base intensity and feature");
  if (params.weights.size() != features.size() || params.colors.size() != features.size()) {
    throw Error(ErrorCode::InvalidArgument, "params do not match feature count");
  }
  Grid3<Rgb> out(features.source_dims());
  VoxelGather gather(features);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = hsl_to_rgb(combine_color_at(gather.at(i), params.weights, params.colors, base_intensity[i]));
  }
  return out;
}

ScalarGrid opacity(const Volume& base, const Volume& gradient_magnitude, const ScalarGrid& importance,
                   std::size_t feature_count, double gain) {
  require_same_dims(base.dims(), gradient_magnitude.dims(), "base and gradient magnitude");
  require_same_dims(base.dims(), importance.dims(), "base and importance");
  if (gain < 0.0) throw Error(ErrorCode::NegativeGain, "gain must be >= 0");
  ScalarGrid out(base.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double od = static_cast<double>(base[i]) * static_cast<double>(gradient_magnitude[i]);
    out[i] = static_cast<float>(enhanced_opacity(od, importance[i], feature_count, gain));
  }
  return out;
}

FusedVolume fuse(const Volume& volume, const FeatureSet& features, const FusionParams& params) {
  require_same_dims(volume.dims(), features.source_dims(), "volume and feature set");
  const ResolvedParams resolved = resolve_params(features, params);

  const Volume* gm = features.find(kSobelFeature);
  std::optional<Volume> computed;
  if (gm == nullptr) {
    computed = sobel_gradient(volume).magnitude;
    gm = &*computed;
  }

  const Dims d = volume.dims();
  const std::size_t n = features.size();
  FusedVolume fused;
  fused.spacing = volume.spacing();
  fused.importance = ScalarGrid(d);
  fused.base_opacity = ScalarGrid(d);
  fused.opacity = ScalarGrid(d);
  fused.color = Grid3<Rgb>(d);
  // One pass with the arithmetic of importance_at and combine_color_at.
  std::vector<const float*> sources;
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) {
    sources.push_back(features.features()[j].data.values().data());
    t[j] = static_cast<double>(n) * resolved.weights[j];
  }
  for (std::size_t i = 0; i < fused.importance.size(); ++i) {
    double omega_sum = 0.0;
    double den = 0.0;
    double sat_sum = 0.0;
    double hue_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = sources[j][i];
      const double omega = x * t[j] * t[j];
      omega_sum += omega;
      den += x;
      sat_sum += omega * resolved.colors[j].saturation;
      hue_sum += omega * resolved.colors[j].saturation * resolved.colors[j].hue;
    }
    const float k = static_cast<float>(den > 0.0 ? omega_sum / den : 0.0);
    const double od = static_cast<double>(volume[i]) * static_cast<double>((*gm)[i]);
    fused.importance[i] = k;
    fused.base_opacity[i] = static_cast<float>(std::clamp(od, 0.0, 1.0));
    fused.opacity[i] = k == 0.0f ? fused.base_opacity[i]
                                 : static_cast<float>(enhanced_opacity(od, k, n, resolved.gain));
    Hsl hsl;
    hsl.lightness = volume[i];
    if (omega_sum > 0.0) hsl.saturation = sat_sum / omega_sum;
    if (sat_sum > 0.0) hsl.hue = hue_sum / sat_sum;
    fused.color[i] = hsl_to_rgb(hsl);
  }
  return fused;
}

}  // namespace usvis
