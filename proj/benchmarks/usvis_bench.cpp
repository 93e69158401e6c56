#include <benchmark/benchmark.h>

#include "usvis/bilateral.hpp"
#include "usvis/features.hpp"
#include "usvis/fusion.hpp"
#include "usvis/phantom.hpp"
#include "usvis/render.hpp"

using namespace usvis;

namespace {

Volume noisy_cylinder(std::size_t n) {
  PhantomSpec spec;
  spec.kind = PhantomKind::Noisy;
  spec.dims = Dims{n, n, n};
  spec.radius = static_cast<double>(n) / 10.0;
  return make_phantom(spec);
}

void BM_BilateralDirect(benchmark::State& state) {
  const Volume v = noisy_cylinder(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(bilateral_direct(v, BilateralParams{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.size()));
}
BENCHMARK(BM_BilateralDirect)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_BilateralFast(benchmark::State& state) {
  const Volume v = noisy_cylinder(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(bilateral_fast(v, BilateralParams{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.size()));
}
BENCHMARK(BM_BilateralFast)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Sobel(benchmark::State& state) {
  const Volume v = noisy_cylinder(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sobel_gradient(v));
}
BENCHMARK(BM_Sobel)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Gvf(benchmark::State& state) {
  const Volume v = sobel_gradient(noisy_cylinder(static_cast<std::size_t>(state.range(0)))).magnitude;
  for (auto _ : state) benchmark::DoNotOptimize(gvf_feature(v, GvfParams{}));
}
BENCHMARK(BM_Gvf)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Frangi(benchmark::State& state) {
  const Volume v = noisy_cylinder(static_cast<std::size_t>(state.range(0)));
  FrangiParams p;
  p.bright_vessels = true;
  for (auto _ : state) benchmark::DoNotOptimize(frangi_vesselness(v, p));
}
BENCHMARK(BM_Frangi)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

struct Prepared {
  Volume volume;
  FeatureSet features;
  FusionParams params;
};

Prepared prepare(std::size_t n) {
  Volume v = noisy_cylinder(n);
  FeatureConfig config;
  config.gvf_params.iterations = 10;
  config.frangi_params.scales = {1, 2};
  FeatureSet set = build_feature_set(v, config);
  FusionParams params = FusionParams::uniform(set.names());
  return {std::move(v), std::move(set), params};
}

void BM_Fuse(benchmark::State& state) {
  const Prepared p = prepare(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fuse(p.volume, p.features, p.params));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.volume.size()));
}
BENCHMARK(BM_Fuse)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const Prepared p = prepare(static_cast<std::size_t>(state.range(0)));
  const FusedVolume fused = fuse(p.volume, p.features, p.params);
  Camera camera;
  camera.rotation_deg = {20, 30, 0};
  const auto mode = static_cast<RenderMode>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(render_fused(fused, camera, mode));
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_Render)
    ->Args({64, static_cast<int>(RenderMode::MipGray)})
    ->Args({64, static_cast<int>(RenderMode::MipColor)})
    ->Args({64, static_cast<int>(RenderMode::Composite)})
    ->Args({128, static_cast<int>(RenderMode::MipColor)})
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
