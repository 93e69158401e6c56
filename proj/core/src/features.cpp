#include "usvis/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "usvis/vvol.hpp"

namespace usvis {
namespace {

using Index = std::ptrdiff_t;

inline std::size_t clamp_index(Index i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<Index>(i, 0, static_cast<Index>(n) - 1));
}

Grid3<double> to_double_grid(const Volume& volume) {
  Grid3<double> out(volume.dims());
  for (std::size_t i = 0; i < volume.size(); ++i) out[i] = volume[i];
  return out;
}

}  // namespace

Grid3<double> VectorField3::magnitude() const {
  Grid3<double> out(dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(u[i] * u[i] + v[i] * v[i] + w[i] * w[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sobel

SobelResult sobel_gradient(const Volume& volume) {
  const Dims d = volume.dims();
  if (d.min_extent() < 3) {
    throw Error(ErrorCode::VolumeTooSmall, "Sobel needs at least 3 voxels along every axis");
  }
  static constexpr double kSmooth[3] = {1.0, 2.0, 1.0};
  static constexpr double kDeriv[3] = {-1.0, 0.0, 1.0};
  VectorField3 field(d);
#pragma omp parallel for schedule(static)
  for (Index z = 0; z < static_cast<Index>(d.nz); ++z) {
    std::size_t zi[3];
    for (int k = 0; k < 3; ++k) zi[k] = clamp_index(z + k - 1, d.nz);
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::size_t yi[3];
      for (int k = 0; k < 3; ++k) yi[k] = clamp_index(static_cast<Index>(y) + k - 1, d.ny);
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::size_t xi[3];
        for (int k = 0; k < 3; ++k) xi[k] = clamp_index(static_cast<Index>(x) + k - 1, d.nx);
        double gx = 0.0;
        double gy = 0.0;
        double gz = 0.0;
        for (int c = 0; c < 3; ++c) {
          for (int b = 0; b < 3; ++b) {
            for (int a = 0; a < 3; ++a) {
              const double v = volume(xi[a], yi[b], zi[c]);
              gx += kDeriv[a] * kSmooth[b] * kSmooth[c] * v;
              gy += kSmooth[a] * kDeriv[b] * kSmooth[c] * v;
              gz += kSmooth[a] * kSmooth[b] * kDeriv[c] * v;
            }
          }
        }
        const std::size_t i = d.index(x, y, static_cast<std::size_t>(z));
        field.u[i] = gx;
        field.v[i] = gy;
        field.w[i] = gz;
      }
    }
  }
  Volume magnitude = normalize_by_max(field.magnitude(), volume.spacing());
  return SobelResult{std::move(field), std::move(magnitude)};
}

// ---------------------------------------------------------------------------
// Gradient vector flow

void GvfParams::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw Error(ErrorCode::InvalidArgument, "GVF mu must be positive");
  }
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "GVF iterations must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::InvalidArgument, "GVF dt must be positive");
  }
  if (dt > max_stable_dt() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "dt " << dt << " exceeds the explicit stability bound 1/(6 mu) = " << max_stable_dt();
    throw Error(ErrorCode::UnstableTimestep, msg.str());
  }
}

VectorField3 central_gradient(const Grid3<double>& f) {
  const Dims d = f.dims();
  VectorField3 g(d);
  auto diff = [](const Grid3<double>& grid, std::size_t i, std::size_t c, std::size_t n,
                 std::size_t stride) {
    if (n < 2) return 0.0;
    if (c == 0) return grid[i + stride] - grid[i];
    if (c == n - 1) return grid[i] - grid[i - stride];
    return 0.5 * (grid[i + stride] - grid[i - stride]);
  };
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        g.u[i] = diff(f, i, x, d.nx, 1);
        g.v[i] = diff(f, i, y, d.ny, d.nx);
        g.w[i] = diff(f, i, z, d.nz, d.nx * d.ny);
      }
    }
  }
  return g;
}

double gvf_energy(const VectorField3& field, const Grid3<double>& edge_map, double mu) {
  const Dims d = field.dims();
  if (!(edge_map.dims() == d)) throw Error(ErrorCode::DimsMismatch, "edge map and field dims differ");
  const VectorField3 grad = central_gradient(edge_map);
  double smooth = 0.0;
  double data = 0.0;
  const Grid3<double>* comps[3] = {&field.u, &field.v, &field.w};
  const Grid3<double>* targets[3] = {&grad.u, &grad.v, &grad.w};
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const double g2 = grad.u[i] * grad.u[i] + grad.v[i] * grad.v[i] + grad.w[i] * grad.w[i];
        for (int c = 0; c < 3; ++c) {
          const Grid3<double>& comp = *comps[c];
          const double here = comp[i];
          if (x + 1 < d.nx) smooth += (comp[i + 1] - here) * (comp[i + 1] - here);
          if (y + 1 < d.ny) smooth += (comp[i + d.nx] - here) * (comp[i + d.nx] - here);
          if (z + 1 < d.nz) {
            const double n = comp[i + d.nx * d.ny];
            smooth += (n - here) * (n - here);
          }
          const double r = here - (*targets[c])[i];
          data += g2 * r * r;
        }
      }
    }
  }
  return mu * smooth + data;
}

VectorField3 gvf_field(const Volume& edge_map, const GvfParams& params) {
  return gvf_field(to_double_grid(edge_map), params);
}

VectorField3 gvf_field(const Grid3<double>& edge_map, const GvfParams& params,
                       const std::function<void(int, const VectorField3&)>& observer) {
  params.validate();
  const Dims d = edge_map.dims();
  const VectorField3 grad = central_gradient(edge_map);
  Grid3<double> g2(d);
  for (std::size_t i = 0; i < g2.size(); ++i) {
    g2[i] = grad.u[i] * grad.u[i] + grad.v[i] * grad.v[i] + grad.w[i] * grad.w[i];
  }

  VectorField3 current = grad;
  VectorField3 next(d);
  const std::size_t sy = d.nx;
  const std::size_t sz = d.nx * d.ny;
  const double mu = params.mu;
  const double dt = params.dt;

  auto step_component = [&](const Grid3<double>& in, const Grid3<double>& target, Grid3<double>& out) {
#pragma omp parallel for schedule(static)
    for (Index z = 0; z < static_cast<Index>(d.nz); ++z) {
      const auto zz = static_cast<std::size_t>(z);
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const std::size_t i = d.index(x, y, zz);
          const double here = in[i];
          // Neumann border: missing neighbors contribute nothing.
          double lap = 0.0;
          if (x > 0) lap += in[i - 1] - here;
          if (x + 1 < d.nx) lap += in[i + 1] - here;
          if (y > 0) lap += in[i - sy] - here;
          if (y + 1 < d.ny) lap += in[i + sy] - here;
          if (zz > 0) lap += in[i - sz] - here;
          if (zz + 1 < d.nz) lap += in[i + sz] - here;
          out[i] = here + dt * (mu * lap - (here - target[i]) * g2[i]);
        }
      }
    }
  };

  for (int it = 0; it < params.iterations; ++it) {
    step_component(current.u, grad.u, next.u);
    step_component(current.v, grad.v, next.v);
    step_component(current.w, grad.w, next.w);
    std::swap(current, next);
    if (observer) observer(it + 1, current);
  }
  return current;
}

Volume gvf_feature(const Volume& volume, const GvfParams& params) {
  params.validate();
  const SobelResult sobel = sobel_gradient(volume);
  return normalize_by_max(gvf_field(to_double_grid(sobel.magnitude), params).magnitude(),
                          volume.spacing());
}

// ---------------------------------------------------------------------------
// Frangi

void FrangiParams::validate() const {
  if (scales.empty()) throw Error(ErrorCode::InvalidArgument, "Frangi needs at least one scale");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
      throw Error(ErrorCode::InvalidArgument, "Frangi scales must be positive");
    }
    if (i > 0 && !(scales[i] > scales[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "Frangi scales must be strictly ascending");
    }
  }
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "Frangi alpha and beta must be positive");
  }
  if (c && !(*c > 0.0)) throw Error(ErrorCode::InvalidArgument, "Frangi c must be positive");
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "Gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));
    sum += taps[k + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Grid3<double> gaussian_smooth(const Grid3<double>& input, double sigma) {
  const auto taps = gaussian_kernel(sigma);
  const Index radius = static_cast<Index>(taps.size() / 2);
  const Dims d = input.dims();
  Grid3<double> a = input;
  Grid3<double> b(d);
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
#pragma omp parallel for schedule(static)
    for (Index z = 0; z < static_cast<Index>(d.nz); ++z) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const auto zz = static_cast<std::size_t>(z);
          const Index c = axis == 0 ? static_cast<Index>(x) : axis == 1 ? static_cast<Index>(y) : z;
          double acc = 0.0;
          for (Index k = -radius; k <= radius; ++k) {
            const std::size_t p = clamp_index(c + k, n);
            const std::size_t j = axis == 0 ? d.index(p, y, zz) : axis == 1 ? d.index(x, p, zz)
                                                                            : d.index(x, y, p);
            acc += taps[static_cast<std::size_t>(k + radius)] * a[j];
          }
          b[d.index(x, y, zz)] = acc;
        }
      }
    }
    std::swap(a, b);
  }
  return a;
}

namespace {

struct HessianSample {
  double xx, yy, zz, xy, xz, yz;
};

// Central differences on the smoothed grid, replicated borders.
inline HessianSample hessian_sample(const Grid3<double>& s, std::size_t x, std::size_t y,
                                    std::size_t z, double scale2) {
  const Dims& d = s.dims();
  const std::size_t xm = clamp_index(static_cast<Index>(x) - 1, d.nx);
  const std::size_t xp = clamp_index(static_cast<Index>(x) + 1, d.nx);
  const std::size_t ym = clamp_index(static_cast<Index>(y) - 1, d.ny);
  const std::size_t yp = clamp_index(static_cast<Index>(y) + 1, d.ny);
  const std::size_t zm = clamp_index(static_cast<Index>(z) - 1, d.nz);
  const std::size_t zp = clamp_index(static_cast<Index>(z) + 1, d.nz);
  const double c = s(x, y, z);
  HessianSample h;
  h.xx = s(xp, y, z) - 2.0 * c + s(xm, y, z);
  h.yy = s(x, yp, z) - 2.0 * c + s(x, ym, z);
  h.zz = s(x, y, zp) - 2.0 * c + s(x, y, zm);
  h.xy = 0.25 * (s(xp, yp, z) - s(xp, ym, z) - s(xm, yp, z) + s(xm, ym, z));
  h.xz = 0.25 * (s(xp, y, zp) - s(xp, y, zm) - s(xm, y, zp) + s(xm, y, zm));
  h.yz = 0.25 * (s(x, yp, zp) - s(x, yp, zm) - s(x, ym, zp) + s(x, ym, zm));
  h.xx *= scale2;
  h.yy *= scale2;
  h.zz *= scale2;
  h.xy *= scale2;
  h.xz *= scale2;
  h.yz *= scale2;
  return h;
}

inline double frobenius(const HessianSample& h) {
  return std::sqrt(h.xx * h.xx + h.yy * h.yy + h.zz * h.zz +
                   2.0 * (h.xy * h.xy + h.xz * h.xz + h.yz * h.yz));
}

}  // namespace

Hessian hessian_at_scale(const Grid3<double>& input, double sigma) {
  const Grid3<double> smoothed = gaussian_smooth(input, sigma);
  const Dims d = input.dims();
  Hessian h(d);
  const double scale2 = sigma * sigma;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const HessianSample s = hessian_sample(smoothed, x, y, z, scale2);
        const std::size_t i = d.index(x, y, z);
        h.xx[i] = s.xx;
        h.yy[i] = s.yy;
        h.zz[i] = s.zz;
        h.xy[i] = s.xy;
        h.xz[i] = s.xz;
        h.yz[i] = s.yz;
      }
    }
  }
  return h;
}

std::array<double, 3> symmetric_eigenvalues(double xx, double yy, double zz, double xy, double xz,
                                            double yz) {
  std::array<double, 3> e{};
  const double p1 = xy * xy + xz * xz + yz * yz;
  const double q = (xx + yy + zz) / 3.0;
  const double p2 = (xx - q) * (xx - q) + (yy - q) * (yy - q) + (zz - q) * (zz - q) + 2.0 * p1;
  if (p1 <= 1e-300 * std::max(1.0, p2) || p2 <= 0.0) {
    e = {xx, yy, zz};
  } else {
    const double p = std::sqrt(p2 / 6.0);
    const double inv = 1.0 / p;
    const double bxx = (xx - q) * inv;
    const double byy = (yy - q) * inv;
    const double bzz = (zz - q) * inv;
    const double bxy = xy * inv;
    const double bxz = xz * inv;
    const double byz = yz * inv;
    const double det = bxx * (byy * bzz - byz * byz) - bxy * (bxy * bzz - byz * bxz) +
                       bxz * (bxy * byz - byy * bxz);
    const double r = std::clamp(det / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double largest = q + 2.0 * p * std::cos(phi);
    const double smallest = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    e = {largest, 3.0 * q - largest - smallest, smallest};
  }
  std::sort(e.begin(), e.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  return e;
}

double vesselness_from_eigenvalues(const std::array<double, 3>& l, double alpha, double beta,
                                   double c) {
  if (l[1] > 0.0 || l[2] > 0.0) return 0.0;
  const double a2 = std::abs(l[1]);
  const double a3 = std::abs(l[2]);
  if (a3 <= 0.0 || a2 <= 0.0) return 0.0;
  const double ra = a2 / a3;
  const double rb = std::abs(l[0]) / std::sqrt(a2 * a3);
  const double s2 = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  return (1.0 - std::exp(-(ra * ra) / (2.0 * alpha * alpha))) *
         std::exp(-(rb * rb) / (2.0 * beta * beta)) * (1.0 - std::exp(-s2 / (2.0 * c * c)));
}

Grid3<double> frangi_vesselness_raw(const Volume& volume, const FrangiParams& params) {
  params.validate();
  const Dims d = volume.dims();
  const double largest = params.scales.back();
  const auto needed = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(2.0 * largest)) + 1);
  if (d.min_extent() < needed) {
    throw Error(ErrorCode::VolumeTooSmall, "Frangi at sigma " + std::to_string(largest) +
                                               " needs at least " + std::to_string(needed) +
                                               " voxels along every axis");
  }
  Grid3<double> input(d);
  for (std::size_t i = 0; i < volume.size(); ++i) {
    input[i] = params.bright_vessels ? volume[i] : 1.0 - volume[i];
  }

  Grid3<double> best(d, 0.0);
  for (double sigma : params.scales) {
    const Grid3<double> smoothed = gaussian_smooth(input, sigma);
    const double scale2 = sigma * sigma;
    double c = 0.0;
    if (params.c) {
      c = *params.c;
    } else {
      double max_norm = 0.0;
#pragma omp parallel for reduction(max : max_norm) schedule(static)
      for (Index z = 0; z < static_cast<Index>(d.nz); ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
          for (std::size_t x = 0; x < d.nx; ++x) {
            max_norm = std::max(max_norm, frobenius(hessian_sample(smoothed, x, y, static_cast<std::size_t>(z), scale2)));
          }
        }
      }
      c = 0.5 * max_norm;
    }
    if (!(c > 0.0)) continue;  // flat at this scale
#pragma omp parallel for schedule(static)
    for (Index z = 0; z < static_cast<Index>(d.nz); ++z) {
      const auto zz = static_cast<std::size_t>(z);
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const HessianSample h = hessian_sample(smoothed, x, y, zz, scale2);
          const auto l = symmetric_eigenvalues(h.xx, h.yy, h.zz, h.xy, h.xz, h.yz);
          const double v = vesselness_from_eigenvalues(l, params.alpha, params.beta, c);
          const std::size_t i = d.index(x, y, zz);
          best[i] = std::max(best[i], v);
        }
      }
    }
  }
  return best;
}

Volume frangi_vesselness(const Volume& volume, const FrangiParams& params) {
  return normalize_by_max(frangi_vesselness_raw(volume, params), volume.spacing());
}

// ---------------------------------------------------------------------------
// Feature sets

void FeatureSet::add(std::string name, Volume data) {
  if (!(data.dims() == source_dims_)) {
    throw Error(ErrorCode::DimsMismatch, "feature '" + name + "' dims differ from the source volume");
  }
  if (name.empty()) throw Error(ErrorCode::InvalidArgument, "feature name must not be empty");
  if (find(name) != nullptr) {
    throw Error(ErrorCode::InvalidArgument, "duplicate feature name '" + name + "'");
  }
  features_.push_back(NamedFeature{std::move(name), std::move(data)});
}

std::vector<std::string> FeatureSet::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

const Volume* FeatureSet::find(const std::string& name) const noexcept {
  for (const auto& f : features_) {
    if (f.name == name) return &f.data;
  }
  return nullptr;
}

void FeatureConfig::select(const std::vector<std::string>& names) {
  sobel = gvf = frangi = false;
  for (const auto& name : names) {
    if (name == kSobelFeature) {
      sobel = true;
    } else if (name == kGvfFeature) {
      gvf = true;
    } else if (name == kFrangiFeature) {
      frangi = true;
    } else {
      throw Error(ErrorCode::UnknownFeature, "unknown feature '" + name + "'");
    }
  }
}

FeatureSet build_feature_set(const Volume& volume, const FeatureConfig& config) {
  if (!config.sobel && !config.gvf && !config.frangi) {
    throw Error(ErrorCode::InvalidArgument, "no features selected");
  }
  if (config.gvf) config.gvf_params.validate();
  if (config.frangi) config.frangi_params.validate();

  FeatureSet set(volume.dims());
  if (config.sobel || config.gvf) {
    SobelResult sobel = sobel_gradient(volume);
    if (config.gvf) {
      Grid3<double> gvf_mag =
          gvf_field(to_double_grid(sobel.magnitude), config.gvf_params).magnitude();
      if (config.sobel) set.add(kSobelFeature, std::move(sobel.magnitude));
      set.add(kGvfFeature, normalize_by_max(gvf_mag, volume.spacing()));
    } else {
      set.add(kSobelFeature, std::move(sobel.magnitude));
    }
  }
  if (config.frangi) set.add(kFrangiFeature, frangi_vesselness(volume, config.frangi_params));
  return set;
}

std::filesystem::path write_feature_set(const FeatureSet& set, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + directory.string() + ": " + ec.message());
  nlohmann::json manifest;
  const Dims& d = set.source_dims();
  manifest["source_dims"] = {d.nx, d.ny, d.nz};
  manifest["features"] = nlohmann::json::array();
  for (const auto& feature : set.features()) {
    const std::string file = feature.name + ".vvol";
    write_vvol(feature.data, directory / file);
    manifest["features"].push_back({{"name", feature.name}, {"path", file}});
  }
  const auto path = directory / "manifest.json";
  const std::string text = manifest.dump(2) + "\n";
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
  return path;
}

FeatureSet read_feature_set(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
    const auto dims = manifest.at("source_dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw Error(ErrorCode::InvalidArgument, "source_dims needs 3 entries");
    FeatureSet set(Dims{dims[0], dims[1], dims[2]});
    for (const auto& entry : manifest.at("features")) {
      const auto name = entry.at("name").get<std::string>();
      const std::filesystem::path rel = entry.at("path").get<std::string>();
      set.add(name, read_vvol(rel.is_absolute() ? rel : manifest_path.parent_path() / rel));
    }
    if (set.size() == 0) throw Error(ErrorCode::InvalidArgument, "manifest lists no features");
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, manifest_path.string() + ": " + e.what());
  }
}

}  // namespace usvis
