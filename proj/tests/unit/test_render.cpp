#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "usvis/render.hpp"
#include "usvis/vvol.hpp"

using namespace usvis;
using usvis::testing::Gen;
using usvis::testing::TempDir;
using usvis::testing::permute_axes;
using usvis::testing::volume_from;

namespace {

Camera square(std::size_t n, std::array<double, 3> rotation = {0, 0, 0}) {
  Camera c;
  c.width = n;
  c.height = n;
  c.rotation_deg = rotation;
  return c;
}

FusedVolume fused_from(const ScalarGrid& opacity, const Grid3<Rgb>& color, Spacing spacing = {}) {
  FusedVolume f;
  f.importance = ScalarGrid(opacity.dims());
  f.base_opacity = opacity;
  f.opacity = opacity;
  f.color = color;
  f.spacing = spacing;
  return f;
}

Volume asymmetric(std::size_t n, std::uint64_t seed) {
  Gen gen(seed);
  const Volume noise = gen.volume(Dims{n, n, n});
  // Bright off-center bar plus noise so no two projections coincide.
  return volume_from(Dims{n, n, n}, [&](std::size_t x, std::size_t y, std::size_t z) {
    const bool bar = x > n / 5 && x < n / 2 && y > n / 3 && y < n / 3 + 3 && z < n / 4;
    return bar ? 1.0 : 0.6 * noise(x, y, z);
  });
}

double max_pixel_diff(const RenderedImage& a, const RenderedImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    m = std::max(m, double(std::abs(a.pixels[i].r - b.pixels[i].r)));
    m = std::max(m, double(std::abs(a.pixels[i].a - b.pixels[i].a)));
  }
  return m;
}

}  // namespace

TEST(RenderMode, Parse) {
  EXPECT_EQ(parse_render_mode("mip"), RenderMode::MipGray);
  EXPECT_EQ(parse_render_mode("mip-gray"), RenderMode::MipGray);
  EXPECT_EQ(parse_render_mode("mip-color"), RenderMode::MipColor);
  EXPECT_EQ(parse_render_mode("composite"), RenderMode::Composite);
  EXPECT_THROW(parse_render_mode("dvr"), Error);
  for (RenderMode m : {RenderMode::MipGray, RenderMode::MipColor, RenderMode::Composite}) {
    EXPECT_EQ(parse_render_mode(to_string(m)), m);
  }
}

TEST(Camera, Validation) {
  const Volume v = Volume::filled(Dims{4, 4, 4}, 0.5f);
  Camera c = square(4);
  c.width = 0;
  EXPECT_THROW(render_mip(v, c), Error);
  c = square(4);
  c.step = 0;
  EXPECT_THROW(render_mip(v, c), Error);
  c = square(4);
  c.zoom = -1;
  EXPECT_THROW(render_mip(v, c), Error);
}

// ---------------------------------------------------------------------------
// MIP

TEST(Mip, ConstantVolumeAnyRotation) {
  const Volume v = Volume::filled(Dims{12, 12, 12}, 0.6f);
  for (const auto& rot : {std::array<double, 3>{0, 0, 0}, {30, 40, 50}, {90, 0, 0}, {-15, 200, 7}}) {
    const RenderedImage img = render_mip(v, square(24, rot));
    EXPECT_NEAR(img.at(12, 12).r, 0.6f, 1e-6);
    for (const Rgba& p : img.pixels) {
      ASSERT_TRUE(std::abs(p.r - 0.6f) < 1e-6 || p.r == 0.0f);
      ASSERT_EQ(p.a, 1.0f);
    }
  }
  const RenderedImage identity = render_mip(v, square(12));
  for (const Rgba& p : identity.pixels) EXPECT_NEAR(p.r, 0.6f, 1e-6);
}

TEST(Mip, SingleBrightVoxel) {
  std::vector<float> data(9 * 9 * 9, 0.0f);
  const Dims d{9, 9, 9};
  data[d.index(2, 6, 4)] = 1.0f;
  const RenderedImage img = render_mip(Volume(d, {}, data), square(9));
  for (std::size_t py = 0; py < 9; ++py) {
    for (std::size_t px = 0; px < 9; ++px) {
      // Image rows run top-down while y runs up.
      const float expected = (px == 2 && py == 8 - 6) ? 1.0f : 0.0f;
      EXPECT_NEAR(img.at(px, py).r, expected, 1e-6) << px << "," << py;
    }
  }
}

TEST(Mip, QuarterTurnsEqualAxisSwaps) {
  const std::size_t n = 16;
  const Volume v = asymmetric(n, 3);
  const std::size_t m = n - 1;
  // ry = 90: rays run along x, image columns follow z.
  const Volume swapped_y = permute_axes(v, {2, 1, 0});
  // rx = 90: rays run along -y, image rows follow z downward.
  const Volume swapped_x = volume_from(v.dims(), [&](auto x, auto y, auto z) { return v(x, z, m - y); });
  // rz = 90: image columns follow -y, rows follow -x.
  const Volume swapped_z = volume_from(v.dims(), [&](auto x, auto y, auto z) { return v(y, m - x, z); });
  const std::pair<std::array<double, 3>, const Volume*> cases[] = {
      {{0, 90, 0}, &swapped_y}, {{90, 0, 0}, &swapped_x}, {{0, 0, 90}, &swapped_z}};
  for (const auto& [rot, oracle] : cases) {
    const RenderedImage rotated = render_mip(v, square(n, rot));
    const RenderedImage reference = render_mip(*oracle, square(n));
    EXPECT_LE(max_pixel_diff(rotated, reference), 0.02) << rot[0] << " " << rot[1] << " " << rot[2];
  }
  // The oracle is not trivially satisfied.
  EXPECT_GT(max_pixel_diff(render_mip(v, square(n, {0, 90, 0})), render_mip(v, square(n))), 0.1);
}

TEST(MipProperty, HalfTurnMirrorsImage) {
  Gen gen(40);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = gen.index(4, 12);
    const Volume v = gen.volume(Dims{n, n, n});
    const RenderedImage front = render_mip(v, square(n));
    const RenderedImage back = render_mip(v, square(n, {0, 180, 0}));
    for (std::size_t py = 0; py < n; ++py) {
      for (std::size_t px = 0; px < n; ++px) {
        ASSERT_NEAR(back.at(n - 1 - px, py).r, front.at(px, py).r, 1e-6);
      }
    }
  }
}

TEST(MipProperty, NeverExceedsVolumeMaximum) {
  Gen gen(41);
  for (int trial = 0; trial < 8; ++trial) {
    const Volume v = gen.volume(gen.dims(3, 10), gen.spacing());
    const float vmax = *std::max_element(v.values().begin(), v.values().end());
    Camera c = square(gen.index(4, 20), {gen.uniform(-180, 180), gen.uniform(-180, 180), gen.uniform(-180, 180)});
    c.zoom = gen.uniform(0.5, 2);
    for (const Rgba& p : render_mip(v, c).pixels) {
      ASSERT_GE(p.r, 0.0f);
      ASSERT_LE(p.r, vmax + 1e-6f);
    }
  }
}

TEST(Mip, FinerStepAgreesOnSmoothVolume) {
  const std::size_t n = 20;
  const Volume blob = volume_from(Dims{n, n, n}, [](auto x, auto y, auto z) {
    const double r2 = std::pow(x - 8.3, 2) + std::pow(y - 11.0, 2) + std::pow(z - 9.6, 2);
    return std::exp(-r2 / 18.0);
  });
  Camera coarse = square(n, {30, 20, 10});
  Camera fine = coarse;
  fine.step = 0.25;
  EXPECT_LE(max_pixel_diff(render_mip(blob, coarse), render_mip(blob, fine)), 0.02);
}

TEST(Mip, AnisotropicSpacingKeepsPhysicalExtent) {
  // 8 x 8 x 4 voxels at 2 mm in z: a physical cube.
  const Volume v = Volume::filled(Dims{8, 8, 4}, 0.5f, Spacing{1, 1, 2});
  for (const auto& rot : {std::array<double, 3>{0, 0, 0}, {90, 0, 0}, {0, 90, 0}}) {
    const RenderedImage img = render_mip(v, square(8, rot));
    std::size_t covered = 0;
    for (const Rgba& p : img.pixels) covered += p.r > 0.0f;
    // The lattice spans 7 voxels in x/y and 3 * 2 mm in z: at most one edge row and column are lost.
    EXPECT_GE(covered, 7u * 6u) << rot[0] << " " << rot[1];
  }
  // A slab at the top z layer lands on the top image rows when z points up.
  // Row 1 sits 2.5 mm above center: z = (3 + 2.5) / 2 = 2.75 voxels.
  const Volume slab = volume_from(Dims{8, 8, 4}, [](auto, auto, auto z) { return z == 3 ? 1.0 : 0.0; },
                                  Spacing{1, 1, 2});
  const RenderedImage side = render_mip(slab, square(8, {-90, 0, 0}));
  EXPECT_NEAR(side.at(4, 1).r, 0.75f, 1e-6);
  EXPECT_EQ(side.at(4, 0).r, 0.0f);
  EXPECT_NEAR(side.at(4, 6).r, 0.0f, 1e-6);
}

TEST(Mip, ZoomMagnifiesAroundCenter) {
  const std::size_t n = 16;
  const Volume v = asymmetric(n, 5);
  Camera c = square(n);
  c.zoom = 2;
  const RenderedImage zoomed = render_mip(v, c);
  const RenderedImage plain = render_mip(v, square(n));
  // Zoom 2 puts pixel (2k + 0.5 - 8) * 0.5 + 7.5 on voxel column 3.75 + k; compare interpolated columns.
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_GE(zoomed.at(2 * k, 8).r, 0.0f);
  }
  EXPECT_NE(max_pixel_diff(zoomed, plain), 0.0);
}

// ---------------------------------------------------------------------------
// Fused rendering

TEST(Compositor, FrontToBackRecurrence) {
  Compositor acc;
  acc.add(0.5, Rgb{1, 1, 1});
  acc.add(0.5, Rgb{1, 1, 1});
  EXPECT_DOUBLE_EQ(acc.a, 0.75);
  const Rgba s = acc.straight();
  EXPECT_FLOAT_EQ(s.r, 1.0f);
  EXPECT_FLOAT_EQ(s.a, 0.75f);
  Compositor mixed;
  mixed.add(0.5, Rgb{1, 0, 0});
  mixed.add(1.0, Rgb{0, 0, 1});
  EXPECT_DOUBLE_EQ(mixed.r, 0.5);
  EXPECT_DOUBLE_EQ(mixed.b, 0.5);
  EXPECT_DOUBLE_EQ(mixed.a, 1.0);
  EXPECT_TRUE(mixed.saturated());
  EXPECT_EQ(Compositor{}.straight().a, 0.0f);
}

TEST(CorrectedAlpha, Examples) {
  EXPECT_NEAR(corrected_alpha(0.3, 1.0), 0.3, 1e-12);
  EXPECT_NEAR(corrected_alpha(0.5, 2.0), 0.75, 1e-12);
  EXPECT_NEAR(corrected_alpha(0.75, 0.5), 0.5, 1e-12);
  EXPECT_EQ(corrected_alpha(1.0, 0.5), 1.0);
  EXPECT_EQ(corrected_alpha(0.0, 0.5), 0.0);
}

TEST(Composite, ZeroOpacityIsTransparent) {
  const Dims d{6, 6, 6};
  const FusedVolume f = fused_from(ScalarGrid(d, 0.0f), Grid3<Rgb>(d, Rgb{1, 1, 1}));
  for (RenderMode mode : {RenderMode::Composite, RenderMode::MipColor}) {
    for (const Rgba& p : render_fused(f, square(6, {10, 20, 30}), mode).pixels) EXPECT_EQ(p.a, 0.0f);
  }
}

TEST(Composite, OpaqueRedVoxel) {
  const Dims d{7, 7, 7};
  ScalarGrid o(d, 0.0f);
  Grid3<Rgb> c(d, Rgb{0, 0, 0});
  o(3, 3, 3) = 1.0f;
  c(3, 3, 3) = Rgb{1, 0, 0};
  const FusedVolume f = fused_from(o, c);
  const Rgba p = render_fused(f, square(7), RenderMode::Composite).at(3, 3);
  EXPECT_NEAR(p.r, 1.0f, 1e-6);
  EXPECT_NEAR(p.g, 0.0f, 1e-6);
  EXPECT_NEAR(p.a, 1.0f, 1e-6);
  EXPECT_EQ(render_fused(f, square(7), RenderMode::Composite).at(2, 3).a, 0.0f);
}

TEST(Composite, UniformSlabMatchesClosedForm) {
  // 16 voxels deep at opacity 0.1: the ray covers 15 voxel lengths in 31 samples of half a voxel.
  const Dims d{4, 4, 16};
  const FusedVolume f = fused_from(ScalarGrid(d, 0.1f), Grid3<Rgb>(d, Rgb{0.2f, 0.4f, 0.6f}));
  Camera c;
  c.width = 4;
  c.height = 4;
  c.rotation_deg = {0, 0, 0};
  c.zoom = 4;  // 4 pixels span the 4 x 4 face after dividing the 16 mm extent
  const Rgba p = render_fused(f, c, RenderMode::Composite).at(1, 1);
  EXPECT_NEAR(p.a, 1.0 - std::pow(0.9, 15.5), 1e-5);
  EXPECT_NEAR(p.r, 0.2f, 1e-5);
  EXPECT_NEAR(p.b, 0.6f, 1e-5);
}

TEST(Composite, EarlyTerminationHidesBackLayers) {
  const Dims d{3, 3, 12};
  ScalarGrid o(d, 0.0f);
  Grid3<Rgb> c(d, Rgb{0, 0, 1});
  for (std::size_t z = 8; z < 12; ++z) {
    for (std::size_t i = 0; i < 9; ++i) {
      o(i % 3, i / 3, z) = 1.0f;
      c(i % 3, i / 3, z) = Rgb{0, 1, 0};
    }
  }
  Camera cam;
  cam.width = cam.height = 3;
  cam.zoom = 4;
  const Rgba p = render_fused(fused_from(o, c), cam, RenderMode::Composite).at(1, 1);
  EXPECT_NEAR(p.g, 1.0f, 1e-6);
  EXPECT_NEAR(p.b, 0.0f, 1e-6);
}

TEST(CompositeProperty, AlphaMonotoneInOpacity) {
  Gen gen(50);
  for (int trial = 0; trial < 5; ++trial) {
    const Dims d = gen.dims(3, 8);
    ScalarGrid lo(d);
    ScalarGrid hi(d);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] = float(gen.uniform(0, 0.04));
      hi[i] = lo[i] + float(gen.uniform(0, 0.01));
    }
    const Grid3<Rgb> c(d, Rgb{1, 1, 1});
    const Camera cam = square(8, {gen.uniform(0, 90), gen.uniform(0, 90), 0});
    const RenderedImage a = render_fused(fused_from(lo, c), cam, RenderMode::Composite);
    const RenderedImage b = render_fused(fused_from(hi, c), cam, RenderMode::Composite);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      ASSERT_LE(a.pixels[i].a, b.pixels[i].a + 1e-7f);
      ASSERT_GE(a.pixels[i].a, 0.0f);
      ASSERT_LE(b.pixels[i].a, 1.0f);
    }
  }
}

TEST(MipColor, TakesColorOfMostOpaqueSample) {
  const Dims d{3, 3, 5};
  ScalarGrid o(d, 0.0f);
  Grid3<Rgb> c(d, Rgb{0, 0, 0});
  o(1, 1, 4) = 0.3f;  // nearest the camera
  c(1, 1, 4) = Rgb{0, 1, 0};
  o(1, 1, 1) = 0.8f;
  c(1, 1, 1) = Rgb{1, 0, 0};
  Camera cam;
  cam.width = cam.height = 3;
  cam.zoom = 5.0 / 3.0;
  const FusedVolume f = fused_from(o, c);
  const Rgba color = render_fused(f, cam, RenderMode::MipColor).at(1, 1);
  EXPECT_NEAR(color.r, 1.0f, 1e-6);
  EXPECT_NEAR(color.g, 0.0f, 1e-6);
  EXPECT_NEAR(color.a, 0.8f, 1e-6);
  const Rgba gray = render_fused(f, cam, RenderMode::MipGray).at(1, 1);
  EXPECT_NEAR(gray.r, 0.8f, 1e-6);
  EXPECT_NEAR(gray.g, 0.8f, 1e-6);
  EXPECT_EQ(gray.a, 1.0f);
}

// ---------------------------------------------------------------------------
// Output

TEST(Quantize, Rounding) {
  RenderedImage img;
  img.width = 4;
  img.height = 1;
  img.pixels = {Rgba{0.5f, 0.0f, 1.0f, 1.0f}, Rgba{-1.0f, 2.0f, NAN, 0.2f}, Rgba{1, 1, 1, 1}, Rgba{}};
  const Rgba8Image q = quantize(img);
  EXPECT_EQ(q.pixels[0], 128);
  EXPECT_EQ(q.pixels[1], 0);
  EXPECT_EQ(q.pixels[2], 255);
  EXPECT_EQ(q.pixels[4], 0);
  EXPECT_EQ(q.pixels[5], 255);
  EXPECT_EQ(q.pixels[6], 0);
  EXPECT_EQ(q.pixels[7], 51);
  for (int k = 8; k < 12; ++k) EXPECT_EQ(q.pixels[k], 255);
}

TEST(Png, RoundTripAndDeterminism) {
  TempDir dir;
  const Volume v = asymmetric(10, 8);
  const RenderedImage img = render_mip(v, square(12, {10, 20, 30}));
  const auto bytes = encode_png(img);
  const Rgba8Image back = decode_rgba_png(bytes);
  EXPECT_EQ(back.width, 12u);
  EXPECT_EQ(back.height, 12u);
  EXPECT_EQ(back.pixels, quantize(img).pixels);
  EXPECT_EQ(encode_png(render_mip(v, square(12, {10, 20, 30}))), bytes);
  write_png(img, dir / "out.png");
  EXPECT_EQ(read_file_bytes(dir / "out.png"), bytes);
}
