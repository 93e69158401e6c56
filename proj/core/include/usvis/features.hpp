#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "usvis/volume.hpp"

namespace usvis {

inline constexpr const char* kSobelFeature = "sobel";
inline constexpr const char* kGvfFeature = "gvf";
inline constexpr const char* kFrangiFeature = "frangi";

/// Three equally sized component grids.
struct VectorField3 {
  Grid3<double> u;
  Grid3<double> v;
  Grid3<double> w;

  explicit VectorField3(Dims dims) : u(dims), v(dims), w(dims) {}
  const Dims& dims() const noexcept { return u.dims(); }
  Grid3<double> magnitude() const;
};

// ---------------------------------------------------------------------------
// Sobel

struct SobelResult {
  VectorField3 field;
  Volume magnitude;  // |field| / max |field|
};

/// 3x3x3 Sobel operator: central difference [-1,0,1] along the derivative
/// axis, [1,2,1] x [1,2,1] smoothing across it, replicated borders.
/// Requires every dimension >= 3.
SobelResult sobel_gradient(const Volume& volume);

// ---------------------------------------------------------------------------
// Gradient vector flow

struct GvfParams {
  double mu = 0.2;
  int iterations = 80;
  double dt = 0.75 / (6.0 * 0.2);

  double max_stable_dt() const noexcept { return 1.0 / (6.0 * mu); }
  void validate() const;
};

/// Central-difference gradient of a scalar grid, one-sided at the borders.
VectorField3 central_gradient(const Grid3<double>& f);

/// Discrete GVF energy
///   sum mu * (|grad u|^2 + |grad v|^2 + |grad w|^2) + |grad f|^2 * |(u,v,w) - grad f|^2
/// with forward differences over in-bounds neighbor pairs for the smoothness
/// term and central differences for grad f.
double gvf_energy(const VectorField3& field, const Grid3<double>& edge_map, double mu);

/// Explicit Jacobi iteration of u_t = mu * lap(u) - (u - f_x) * |grad f|^2 (and
/// likewise for v, w), starting from grad f. Each step reads only the previous
/// iterate. The optional observer sees the field after every step.
VectorField3 gvf_field(const Volume& edge_map, const GvfParams& params);
VectorField3 gvf_field(const Grid3<double>& edge_map, const GvfParams& params,
                       const std::function<void(int, const VectorField3&)>& observer = {});

/// Edge map = Sobel magnitude of the volume; feature = |GVF| / max.
Volume gvf_feature(const Volume& volume, const GvfParams& params);

// ---------------------------------------------------------------------------
// Frangi vesselness

struct FrangiParams {
  std::vector<double> scales{1.0, 2.0, 3.0, 4.0};
  double alpha = 0.5;
  double beta = 0.5;
  /// Structureness constant. Unset means half the maximum Hessian Frobenius
  /// norm over the volume, chosen per scale.
  std::optional<double> c;
  bool bright_vessels = false;

  void validate() const;
};

/// Scale-normalized Hessian components at one scale.
struct Hessian {
  Grid3<double> xx, yy, zz, xy, xz, yz;
  explicit Hessian(Dims d) : xx(d), yy(d), zz(d), xy(d), xz(d), yz(d) {}
};

/// Sampled, normalized Gaussian taps for one axis, radius ceil(3 * sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with replicated borders.
Grid3<double> gaussian_smooth(const Grid3<double>& input, double sigma);

/// Second derivatives of the Gaussian-smoothed input by central differences
/// ([1,-2,1] and the 4-point mixed stencil), multiplied by sigma^2.
Hessian hessian_at_scale(const Grid3<double>& input, double sigma);

/// Eigenvalues of a symmetric 3x3 matrix, ordered |l1| <= |l2| <= |l3|.
std::array<double, 3> symmetric_eigenvalues(double xx, double yy, double zz, double xy,
                                            double xz, double yz);

/// Frangi measure for eigenvalues ordered by magnitude. Zero unless the two
/// largest-magnitude eigenvalues are negative (bright tubes).
double vesselness_from_eigenvalues(const std::array<double, 3>& l, double alpha, double beta,
                                   double c);

/// Maximum response over scales before global normalization.
Grid3<double> frangi_vesselness_raw(const Volume& volume, const FrangiParams& params);

/// frangi_vesselness_raw divided by its global maximum.
Volume frangi_vesselness(const Volume& volume, const FrangiParams& params);

// ---------------------------------------------------------------------------
// Feature sets

struct NamedFeature {
  std::string name;
  Volume data;
};

/// Normalized feature volumes aligned with one source volume.
class FeatureSet {
 public:
  explicit FeatureSet(Dims source_dims) : source_dims_(source_dims) {}

  /// Throws DimsMismatch or InvalidArgument (duplicate name).
  void add(std::string name, Volume data);

  const Dims& source_dims() const noexcept { return source_dims_; }
  const std::vector<NamedFeature>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }
  std::vector<std::string> names() const;
  const Volume* find(const std::string& name) const noexcept;

 private:
  Dims source_dims_;
  std::vector<NamedFeature> features_;
};

struct FeatureConfig {
  bool sobel = true;
  bool gvf = true;
  bool frangi = true;
  GvfParams gvf_params;
  FrangiParams frangi_params;

  /// Enables exactly the listed feature names.
  void select(const std::vector<std::string>& names);
};

/// Computes the selected features in the fixed order sobel, gvf, frangi.
/// The Sobel pass is shared with the GVF edge map.
FeatureSet build_feature_set(const Volume& volume, const FeatureConfig& config);

/// Writes one VVOL per feature plus manifest.json
///   {"source_dims":[nx,ny,nz],"features":[{"name":..,"path":..}]}
/// into the directory. Paths in the manifest are relative to it.
std::filesystem::path write_feature_set(const FeatureSet& set, const std::filesystem::path& directory);
FeatureSet read_feature_set(const std::filesystem::path& manifest_path);

}  // namespace usvis
