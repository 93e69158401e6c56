#include "usvis/pipeline.hpp"

#include <utility>

#include "usvis/frames.hpp"
#include "usvis/fusion_json.hpp"
#include "usvis/metrics.hpp"
#include "usvis/vvol.hpp"

namespace usvis {
namespace {

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, e);
  } catch (const std::exception& e) {
    throw PipelineError(stage, Error(ErrorCode::IoError, e.what()));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PipelineConfig config;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "pipeline config must be a JSON object");
  try {
    if (j.contains("input")) config.input = resolve(base_dir, j.at("input").get<std::string>());
    if (j.contains("output")) config.output_dir = resolve(base_dir, j.at("output").get<std::string>());
    if (j.contains("reference")) config.reference = resolve(base_dir, j.at("reference").get<std::string>());
    if (j.contains("spacing")) {
      const auto s = j.at("spacing").get<std::vector<float>>();
      if (s.size() != 3) throw Error(ErrorCode::InvalidArgument, "spacing needs 3 entries");
      config.spacing = Spacing{s[0], s[1], s[2]};
    }
    if (j.contains("bilateral")) {
      const auto& b = j.at("bilateral");
      config.bilateral.sigma_spatial = get_or(b, "sigma_spatial", config.bilateral.sigma_spatial);
      config.bilateral.sigma_range = get_or(b, "sigma_range", config.bilateral.sigma_range);
      config.bilateral.window_radius = get_or(b, "window_radius", config.bilateral.window_radius);
      config.direct_bilateral = get_or(b, "direct", false);
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      if (f.contains("select")) config.features.select(f.at("select").get<std::vector<std::string>>());
      auto& fr = config.features.frangi_params;
      fr.scales = get_or(f, "scales", fr.scales);
      fr.alpha = get_or(f, "alpha", fr.alpha);
      fr.beta = get_or(f, "beta", fr.beta);
      if (f.contains("c")) fr.c = f.at("c").get<double>();
      fr.bright_vessels = get_or(f, "bright_vessels", fr.bright_vessels);
      if (f.contains("gvf")) {
        const auto& g = f.at("gvf");
        auto& gp = config.features.gvf_params;
        gp.mu = get_or(g, "mu", gp.mu);
        gp.iterations = get_or(g, "iterations", gp.iterations);
        gp.dt = g.contains("dt") ? g.at("dt").get<double>() : 0.75 / (6.0 * gp.mu);
      }
    }
    if (j.contains("fusion")) config.fusion = fusion_params_from_json(j.at("fusion"));
    if (j.contains("render")) {
      const auto& r = j.at("render");
      if (r.contains("mode")) config.mode = parse_render_mode(r.at("mode").get<std::string>());
      if (r.contains("rotation")) {
        const auto rot = r.at("rotation").get<std::vector<double>>();
        if (rot.size() != 3) throw Error(ErrorCode::InvalidArgument, "rotation needs 3 entries");
        config.camera.rotation_deg = {rot[0], rot[1], rot[2]};
      }
      if (r.contains("size")) {
        const auto size = r.at("size").get<std::vector<std::size_t>>();
        if (size.size() != 2 || size[0] < 1 || size[1] < 1) {
          throw Error(ErrorCode::InvalidArgument, "size needs 2 positive entries");
        }
        config.camera.width = size[0];
        config.camera.height = size[1];
      }
      config.camera.step = get_or(r, "step", config.camera.step);
      config.camera.zoom = get_or(r, "zoom", config.camera.zoom);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("pipeline config: ") + e.what());
  }
  return config;
}

Volume load_volume(const std::filesystem::path& input, Spacing spacing) {
  std::error_code ec;
  if (std::filesystem::is_directory(input, ec)) {
    return ingest_frames(read_frame_directory(input, spacing));
  }
  if (!std::filesystem::exists(input, ec)) {
    throw Error(ErrorCode::IoError, "input " + input.string() + " does not exist");
  }
  return read_vvol(input);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  PipelineResult result;
  const Volume input = run_stage("input", [&] { return load_volume(config.input, config.spacing); });

  run_stage("output", [&] {
    std::filesystem::create_directories(config.output_dir);
    return 0;
  });

  const Volume filtered = run_stage("filter", [&] {
    return config.direct_bilateral ? bilateral_direct(input, config.bilateral)
                                   : bilateral_fast(input, config.bilateral);
  });
  result.filtered_path = config.output_dir / "filtered.vvol";
  run_stage("output", [&] {
    write_vvol(filtered, result.filtered_path);
    return 0;
  });

  const FeatureSet features = run_stage("features", [&] { return build_feature_set(filtered, config.features); });
  result.manifest_path =
      run_stage("output", [&] { return write_feature_set(features, config.output_dir / "features"); });

  const FusedVolume fused = run_stage("fuse", [&] {
    return fuse(filtered, features, config.fusion.value_or(FusionParams::uniform(features.names())));
  });

  const RenderedImage image = run_stage("render", [&] { return render_fused(fused, config.camera, config.mode); });
  result.image_path = config.output_dir / "render.png";
  run_stage("output", [&] {
    write_png(image, result.image_path);
    return 0;
  });

  if (config.reference) {
    run_stage("metrics", [&] {
      const Volume reference = load_volume(*config.reference, config.spacing);
      result.mse = mse(filtered, reference);
      result.psnr = psnr_from_mse(*result.mse);
      return 0;
    });
  }
  return result;
}

}  // namespace usvis
