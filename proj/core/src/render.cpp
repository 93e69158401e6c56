#include "usvis/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <limits>
#include <optional>
#include <vector>

#include "usvis/vvol.hpp"

namespace usvis {
namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

// R = Rz * Ry * Rx; entries within 1e-12 of 0 or +-1 are snapped so that
// quarter turns map lattice points onto lattice points exactly.
Mat3 rotation_matrix(const std::array<double, 3>& degrees) {
  const double rx = degrees[0] * std::numbers::pi / 180.0;
  const double ry = degrees[1] * std::numbers::pi / 180.0;
  const double rz = degrees[2] * std::numbers::pi / 180.0;
  const Mat3 mx{{{1, 0, 0}, {0, std::cos(rx), -std::sin(rx)}, {0, std::sin(rx), std::cos(rx)}}};
  const Mat3 my{{{std::cos(ry), 0, std::sin(ry)}, {0, 1, 0}, {-std::sin(ry), 0, std::cos(ry)}}};
  const Mat3 mz{{{std::cos(rz), -std::sin(rz), 0}, {std::sin(rz), std::cos(rz), 0}, {0, 0, 1}}};
  Mat3 r = multiply(mz, multiply(my, mx));
  for (auto& row : r) {
    for (double& v : row) {
      if (std::abs(v) < 1e-12) v = 0.0;
      if (std::abs(v - 1.0) < 1e-12) v = 1.0;
      if (std::abs(v + 1.0) < 1e-12) v = -1.0;
    }
  }
  return r;
}

/// Eight-corner interpolation stencil shared by every grid sampled at a point.
struct Stencil {
  std::size_t index[8];
  double weight[8];

  template <typename T>
  double apply(const Grid3<T>& grid) const noexcept {
    double acc = 0.0;
    for (int k = 0; k < 8; ++k) acc += weight[k] * static_cast<double>(grid[index[k]]);
    return acc;
  }

  Rgb apply_rgb(const Grid3<Rgb>& grid) const noexcept {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
    for (int k = 0; k < 8; ++k) {
      const Rgb& c = grid[index[k]];
      r += weight[k] * c.r;
      g += weight[k] * c.g;
      b += weight[k] * c.b;
    }
    return Rgb{static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
  }

  // Colors weighted by corner opacity, so transparent neighbors do not bleed
  // their color into the sample.
  Rgb apply_rgb_weighted(const Grid3<Rgb>& grid, const ScalarGrid& opacity) const noexcept {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
    double total = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double w = weight[k] * static_cast<double>(opacity[index[k]]);
      const Rgb& c = grid[index[k]];
      r += w * c.r;
      g += w * c.g;
      b += w * c.b;
      total += w;
    }
    if (!(total > 0.0)) return apply_rgb(grid);
    return Rgb{static_cast<float>(r / total), static_cast<float>(g / total), static_cast<float>(b / total)};
  }
};

// Points within 1e-6 voxel of the box (ray entry/exit round-off) are pulled
// onto it; anything further out samples as background.
std::optional<Stencil> locate(const Dims& d, double x, double y, double z) noexcept {
  constexpr double tol = 1e-6;
  const double mx = static_cast<double>(d.nx - 1);
  const double my = static_cast<double>(d.ny - 1);
  const double mz = static_cast<double>(d.nz - 1);
  if (!(x >= -tol && y >= -tol && z >= -tol && x <= mx + tol && y <= my + tol && z <= mz + tol)) {
    return std::nullopt;
  }
  x = std::clamp(x, 0.0, mx);
  y = std::clamp(y, 0.0, my);
  z = std::clamp(z, 0.0, mz);
  std::size_t x0 = static_cast<std::size_t>(x);
  std::size_t y0 = static_cast<std::size_t>(y);
  std::size_t z0 = static_cast<std::size_t>(z);
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
  Stencil s;
  for (int k = 0; k < 8; ++k) {
    const bool bx = k & 1;
    const bool by = k & 2;
    const bool bz = k & 4;
    s.index[k] = i + (bx ? sx : 0) + (by ? sy : 0) + (bz ? sz : 0);
    s.weight[k] = (bx ? fx : 1.0 - fx) * (by ? fy : 1.0 - fy) * (bz ? fz : 1.0 - fz);
  }
  return s;
}

/// Interpolation cell of a point: lower corner and fractions.
struct Cell {
  std::size_t x0, y0, z0;
  double fx, fy, fz;
};

// Same placement as locate(); false outside the box.
[[gnu::always_inline]] inline bool find_cell(const Dims& d, double x, double y, double z, Cell& c) noexcept {
  constexpr double tol = 1e-6;
  const double mx = static_cast<double>(d.nx - 1);
  const double my = static_cast<double>(d.ny - 1);
  const double mz = static_cast<double>(d.nz - 1);
  if (!(x >= -tol && y >= -tol && z >= -tol && x <= mx + tol && y <= my + tol && z <= mz + tol)) {
    return false;
  }
  x = std::clamp(x, 0.0, mx);
  y = std::clamp(y, 0.0, my);
  z = std::clamp(z, 0.0, mz);
  c.x0 = static_cast<std::size_t>(x);
  c.y0 = static_cast<std::size_t>(y);
  c.z0 = static_cast<std::size_t>(z);
  if (c.x0 + 1 >= d.nx) c.x0 = d.nx > 1 ? d.nx - 2 : 0;
  if (c.y0 + 1 >= d.ny) c.y0 = d.ny > 1 ? d.ny - 2 : 0;
  if (c.z0 + 1 >= d.nz) c.z0 = d.nz > 1 ? d.nz - 2 : 0;
  c.fx = x - static_cast<double>(c.x0);
  c.fy = y - static_cast<double>(c.y0);
  c.fz = z - static_cast<double>(c.z0);
  return true;
}

// Same arithmetic as locate(...)->apply(grid) without building the stencil.
[[gnu::always_inline]] inline double interpolate(const Dims& d, const float* data, const Cell& c) noexcept {
  const std::size_t sx = d.nx > 1 ? 1 : 0;
  const std::size_t sy = d.ny > 1 ? d.nx : 0;
  const std::size_t sz = d.nz > 1 ? d.nx * d.ny : 0;
  const float* p = data + d.index(c.x0, c.y0, c.z0);
  const double gx = 1.0 - c.fx;
  const double gy = 1.0 - c.fy;
  const double gz = 1.0 - c.fz;
  double acc = 0.0;
  acc += gx * gy * gz * static_cast<double>(p[0]);
  acc += c.fx * gy * gz * static_cast<double>(p[sx]);
  acc += gx * c.fy * gz * static_cast<double>(p[sy]);
  acc += c.fx * c.fy * gz * static_cast<double>(p[sx + sy]);
  acc += gx * gy * c.fz * static_cast<double>(p[sz]);
  acc += c.fx * gy * c.fz * static_cast<double>(p[sx + sz]);
  acc += gx * c.fy * c.fz * static_cast<double>(p[sy + sz]);
  acc += c.fx * c.fy * c.fz * static_cast<double>(p[sx + sy + sz]);
  return acc;
}

/// Maximum over blocks of interpolation cells, halo included, so a block
/// bounds every sample whose cell lies in it.
class BlockMax {
 public:
  static constexpr std::size_t kBlock = 8;

  BlockMax(const Dims& d, const float* data) {
    auto blocks = [](std::size_t n) { return n > 1 ? (n - 2) / kBlock + 1 : 1; };
    bx_ = blocks(d.nx);
    by_ = blocks(d.ny);
    bz_ = blocks(d.nz);
    max_.assign(bx_ * by_ * bz_, 0.0f);
    // Block b holds cells [bB, bB+B) which read voxels [bB, bB+B].
    auto last = [](std::size_t b, std::size_t n) { return std::min(b * kBlock + kBlock, n - 1); };
    for (std::size_t bz = 0; bz < bz_; ++bz) {
      for (std::size_t by = 0; by < by_; ++by) {
        for (std::size_t bx = 0; bx < bx_; ++bx) {
          float m = 0.0f;
          for (std::size_t z = bz * kBlock; z <= last(bz, d.nz); ++z) {
            for (std::size_t y = by * kBlock; y <= last(by, d.ny); ++y) {
              const float* row = data + d.index(0, y, z);
              for (std::size_t x = bx * kBlock; x <= last(bx, d.nx); ++x) m = std::max(m, row[x]);
            }
          }
          max_[(bz * by_ + by) * bx_ + bx] = m;
        }
      }
    }
  }

  double at(const Cell& c) const noexcept {
    return max_[((c.z0 / kBlock) * by_ + c.y0 / kBlock) * bx_ + c.x0 / kBlock];
  }

 private:
  std::size_t bx_, by_, bz_;
  std::vector<float> max_;
};

/// Ray setup for one camera over one volume geometry. Points are produced in
/// voxel coordinates; t is physical distance along the view direction.
class RayCaster {
 public:
  RayCaster(const Dims& dims, const Spacing& spacing, const Camera& camera)
      : dims_(dims), camera_(camera) {
    if (camera.width == 0 || camera.height == 0) {
      throw Error(ErrorCode::InvalidArgument, "image size must be at least 1x1");
    }
    if (!(camera.step > 0.0) || !(camera.zoom > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "camera step and zoom must be positive");
    }
    const Mat3 r = rotation_matrix(camera.rotation_deg);
    spacing_[0] = spacing.sx;
    spacing_[1] = spacing.sy;
    spacing_[2] = spacing.sz;
    const double n[3] = {static_cast<double>(dims.nx), static_cast<double>(dims.ny),
                         static_cast<double>(dims.nz)};
    double span = 0.0;
    for (int a = 0; a < 3; ++a) {
      center_[a] = 0.5 * (n[a] - 1.0) * spacing_[a];
      upper_[a] = n[a] - 1.0;
      span = std::max(span, n[a] * spacing_[a]);
    }
    pixel_size_ = span / camera.zoom / static_cast<double>(std::min(camera.width, camera.height));
    // Columns of R^T are the rows of R.
    for (int a = 0; a < 3; ++a) {
      image_x_[a] = r[0][a];
      image_y_[a] = r[1][a];
      direction_[a] = -r[2][a] / spacing_[a];
    }
    step_physical_ = camera.step * std::min({spacing_[0], spacing_[1], spacing_[2]});
  }

  double step_physical() const noexcept { return step_physical_; }

  struct Ray {
    double origin[3];
    double t_enter;
    double t_exit;
  };

  /// nullopt when the ray misses the volume.
  std::optional<Ray> ray(std::size_t px, std::size_t py) const noexcept {
    const double vx = (static_cast<double>(px) + 0.5 - 0.5 * static_cast<double>(camera_.width)) * pixel_size_;
    const double vy = (0.5 * static_cast<double>(camera_.height) - static_cast<double>(py) - 0.5) * pixel_size_;
    Ray ray{};
    ray.t_enter = -std::numeric_limits<double>::infinity();
    ray.t_exit = std::numeric_limits<double>::infinity();
    constexpr double eps = 1e-9;
    for (int a = 0; a < 3; ++a) {
      ray.origin[a] = (center_[a] + vx * image_x_[a] + vy * image_y_[a]) / spacing_[a];
      if (direction_[a] == 0.0) {
        if (ray.origin[a] < -eps || ray.origin[a] > upper_[a] + eps) return std::nullopt;
        continue;
      }
      double t0 = -ray.origin[a] / direction_[a];
      double t1 = (upper_[a] - ray.origin[a]) / direction_[a];
      if (t0 > t1) std::swap(t0, t1);
      ray.t_enter = std::max(ray.t_enter, t0);
      ray.t_exit = std::min(ray.t_exit, t1);
    }
    if (!(ray.t_enter <= ray.t_exit + eps)) return std::nullopt;
    return ray;
  }

  /// Calls visit(x, y, z) front to back; stops when visit returns false.
  template <typename Visit>
  void march(const Ray& ray, Visit&& visit) const {
    const auto steps = static_cast<std::size_t>(std::max(0.0, std::floor((ray.t_exit - ray.t_enter) / step_physical_ + 1e-9)));
    for (std::size_t k = 0; k <= steps; ++k) {
      const double t = ray.t_enter + static_cast<double>(k) * step_physical_;
      if (!visit(ray.origin[0] + t * direction_[0], ray.origin[1] + t * direction_[1],
                 ray.origin[2] + t * direction_[2])) {
        return;
      }
    }
  }

 private:
  Dims dims_;
  Camera camera_;
  double spacing_[3];
  double center_[3];
  double upper_[3];
  double image_x_[3];
  double image_y_[3];
  double direction_[3];
  double pixel_size_ = 1.0;
  double step_physical_ = 0.5;
};

RenderedImage blank_image(const Camera& camera) {
  RenderedImage image;
  image.width = camera.width;
  image.height = camera.height;
  image.pixels.assign(camera.width * camera.height, Rgba{});
  return image;
}

}  // namespace

RenderMode parse_render_mode(std::string_view text) {
  if (text == "mip" || text == "mip-gray") return RenderMode::MipGray;
  if (text == "mip-color") return RenderMode::MipColor;
  if (text == "composite") return RenderMode::Composite;
  throw Error(ErrorCode::InvalidArgument,
              "unknown render mode '" + std::string(text) + "' (mip, mip-color, composite)");
}

std::string_view to_string(RenderMode mode) noexcept {
  switch (mode) {
    case RenderMode::MipGray: return "mip";
    case RenderMode::MipColor: return "mip-color";
    case RenderMode::Composite: return "composite";
  }
  return "mip";
}

void Compositor::add(double alpha, const Rgb& color) noexcept {
  const double w = (1.0 - a) * alpha;
  r += w * color.r;
  g += w * color.g;
  b += w * color.b;
  a += w;
}

Rgba Compositor::straight() const noexcept {
  if (a <= 0.0) return Rgba{};
  auto c = [this](double v) { return static_cast<float>(std::clamp(v / a, 0.0, 1.0)); };
  return Rgba{c(r), c(g), c(b), static_cast<float>(std::clamp(a, 0.0, 1.0))};
}

double corrected_alpha(double opacity, double step_ratio) noexcept {
  const double o = std::clamp(opacity, 0.0, 1.0);
  if (o >= 1.0) return 1.0;
  return 1.0 - std::pow(1.0 - o, step_ratio);
}

RenderedImage render_mip(const Volume& volume, const Camera& camera) {
  const RayCaster caster(volume.dims(), volume.spacing(), camera);
  RenderedImage image = blank_image(camera);
  const Dims dims = volume.dims();
  const float* data = volume.grid().values().data();
  const BlockMax blocks(dims, data);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t py = 0; py < static_cast<std::ptrdiff_t>(camera.height); ++py) {
    for (std::size_t px = 0; px < camera.width; ++px) {
      double best = 0.0;
      if (const auto ray = caster.ray(px, static_cast<std::size_t>(py))) {
        caster.march(*ray, [&](double x, double y, double z) {
          Cell c;
          if (find_cell(dims, x, y, z, c) && blocks.at(c) * (1.0 + 1e-9) > best) {
            best = std::max(best, interpolate(dims, data, c));
          }
          return true;
        });
      }
      const auto v = static_cast<float>(std::clamp(best, 0.0, 1.0));
      image.at(px, static_cast<std::size_t>(py)) = Rgba{v, v, v, 1.0f};
    }
  }
  return image;
}

RenderedImage render_fused(const FusedVolume& fused, const Camera& camera, RenderMode mode) {
  const RayCaster caster(fused.dims(), fused.spacing, camera);
  RenderedImage image = blank_image(camera);
  const Dims dims = fused.dims();
  const float* opacity = fused.opacity.values().data();
  std::optional<BlockMax> blocks;
  if (mode != RenderMode::Composite) blocks.emplace(dims, opacity);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t py = 0; py < static_cast<std::ptrdiff_t>(camera.height); ++py) {
    for (std::size_t px = 0; px < camera.width; ++px) {
      Rgba& out = image.at(px, static_cast<std::size_t>(py));
      const auto ray = caster.ray(px, static_cast<std::size_t>(py));
      if (mode == RenderMode::Composite) {
        Compositor acc;
        if (ray) {
          caster.march(*ray, [&](double x, double y, double z) {
            Cell c;
            if (!find_cell(dims, x, y, z, c)) return true;
            const double o = interpolate(dims, opacity, c);
            if (!(o > 0.0)) return true;
            const auto s = locate(dims, x, y, z);
            acc.add(corrected_alpha(o, camera.step), s->apply_rgb_weighted(fused.color, fused.opacity));
            return !acc.saturated();
          });
        }
        out = acc.straight();
        continue;
      }
      double best = 0.0;
      std::optional<std::array<double, 3>> best_at;
      if (ray) {
        caster.march(*ray, [&](double x, double y, double z) {
          Cell c;
          if (!find_cell(dims, x, y, z, c) || !(blocks->at(c) * (1.0 + 1e-9) > best)) return true;
          const double o = interpolate(dims, opacity, c);
          if (o > best) {
            best = o;
            best_at = {x, y, z};
          }
          return true;
        });
      }
      const auto alpha = static_cast<float>(std::clamp(best, 0.0, 1.0));
      if (mode == RenderMode::MipGray) {
        out = Rgba{alpha, alpha, alpha, 1.0f};
      } else if (best_at) {
        const Rgb c = locate(dims, (*best_at)[0], (*best_at)[1], (*best_at)[2])
                          ->apply_rgb_weighted(fused.color, fused.opacity);
        out = Rgba{std::clamp(c.r, 0.0f, 1.0f), std::clamp(c.g, 0.0f, 1.0f), std::clamp(c.b, 0.0f, 1.0f),
                   alpha};
      }
    }
  }
  return image;
}

Rgba8Image quantize(const RenderedImage& image) {
  Rgba8Image out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(4 * image.pixels.size());
  auto q = [](float c) {
    const float v = std::isfinite(c) ? std::clamp(c, 0.0f, 1.0f) : 0.0f;
    return static_cast<std::uint8_t>(std::lround(static_cast<double>(v) * 255.0));
  };
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const Rgba& p = image.pixels[i];
    out.pixels[4 * i] = q(p.r);
    out.pixels[4 * i + 1] = q(p.g);
    out.pixels[4 * i + 2] = q(p.b);
    out.pixels[4 * i + 3] = q(p.a);
  }
  return out;
}

std::vector<std::byte> encode_png(const RenderedImage& image) { return encode_rgba_png(quantize(image)); }

void write_png(const RenderedImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_png(image));
}

}  // namespace usvis
