#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "usvis/frames.hpp"
#include "usvis/fusion_json.hpp"
#include "usvis/metrics.hpp"
#include "usvis/phantom.hpp"
#include "usvis/pipeline.hpp"
#include "usvis/service.hpp"
#include "usvis/vvol.hpp"

namespace {

using namespace usvis;

constexpr int kExitUsage = 1;
constexpr int kExitStage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& flag, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag + ": '" + text + "' is not a number");
}

std::vector<double> to_doubles(const std::string& flag, const std::string& text, std::size_t expected = 0) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(to_double(flag, part));
  if (out.empty() || (expected != 0 && out.size() != expected)) {
    throw UsageError(flag + ": expected " + (expected ? std::to_string(expected) : std::string("some")) +
                     " comma-separated values");
  }
  return out;
}

std::pair<std::size_t, std::size_t> to_size(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 2) throw UsageError("--size: expected WxH");
  const double w = to_double("--size", parts[0]);
  const double h = to_double("--size", parts[1]);
  if (w < 1 || h < 1 || w != std::floor(w) || h != std::floor(h)) throw UsageError("--size: expected WxH");
  return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
}

Dims to_dims(const std::string& text) {
  const auto parts = split(text, 'x');
  std::vector<std::size_t> n;
  for (const auto& p : parts) {
    const double v = to_double("--dims", p);
    if (v < 1 || v != std::floor(v)) throw UsageError("--dims: expected N or NXxNYxNZ");
    n.push_back(static_cast<std::size_t>(v));
  }
  if (n.size() == 1) return Dims{n[0], n[0], n[0]};
  if (n.size() == 3) return Dims{n[0], n[1], n[2]};
  throw UsageError("--dims: expected N or NXxNYxNZ");
}

Spacing to_spacing(const std::string& text) {
  const auto s = to_doubles("--spacing", text, 3);
  return Spacing{static_cast<float>(s[0]), static_cast<float>(s[1]), static_cast<float>(s[2])};
}

// "frangi=0.8,sobel=0.1" keeps colors and gain already present in base.
FusionParams apply_weights(const std::string& text, FusionParams base) {
  std::vector<FeatureWeight> features;
  std::vector<double> raw;
  for (const auto& item : split(text, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--weights: expected name=k,...");
    const std::string name = item.substr(0, eq);
    const double w = to_double("--weights", item.substr(eq + 1));
    const FeatureWeight* prior = base.find(name);
    features.push_back({name, w, prior ? prior->color : default_color(name)});
    raw.push_back(w);
  }
  const auto normalized = normalize_weights(raw);
  for (std::size_t j = 0; j < features.size(); ++j) features[j].weight = normalized[j];
  base.features = std::move(features);
  return base;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

// Flags shared by the stage subcommands. Strings stay raw until the stage
// runs so that a config file can be overlaid first.
struct Flags {
  std::string input;
  std::string output;
  std::string config;
  std::string reference;
  std::string features_manifest;
  std::string spacing;
  double sigma_spatial = 0.0;
  double sigma_range = 0.0;
  int window_radius = 0;
  bool direct = false;
  std::string scales;
  std::string select;
  bool bright_vessels = false;
  std::string weights;
  double gain = -1.0;
  std::string rotation;
  std::string mode;
  std::string size;
  double zoom = 0.0;
};

PipelineConfig make_config(const Flags& f, CLI::App& app) {
  PipelineConfig config;
  if (!f.config.empty()) {
    const nlohmann::json j = read_json(f.config);
    // A bare FusionParams document is accepted wherever a config is.
    if (j.contains("weights") && !j.contains("fusion")) {
      config.fusion = fusion_params_from_json(j);
    } else {
      config = pipeline_config_from_json(j, std::filesystem::path(f.config).parent_path());
    }
  }
  auto given = [&](const char* name) {
    const CLI::Option* opt = app.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--input")) config.input = f.input;
  if (given("--output")) config.output_dir = f.output;
  if (given("--reference")) config.reference = f.reference;
  if (given("--spacing")) config.spacing = to_spacing(f.spacing);
  if (given("--sigma-spatial")) {
    config.bilateral.sigma_spatial = f.sigma_spatial;
    if (!given("--window-radius")) {
      config.bilateral.window_radius =
          std::max(config.bilateral.window_radius, static_cast<int>(std::ceil(2.0 * f.sigma_spatial)));
    }
  }
  if (given("--sigma-range")) config.bilateral.sigma_range = f.sigma_range;
  if (given("--window-radius")) config.bilateral.window_radius = f.window_radius;
  if (given("--direct")) config.direct_bilateral = f.direct;
  if (given("--scales")) config.features.frangi_params.scales = to_doubles("--scales", f.scales);
  if (given("--select")) config.features.select(split(f.select, ','));
  if (given("--bright-vessels")) config.features.frangi_params.bright_vessels = f.bright_vessels;
  if (given("--weights")) config.fusion = apply_weights(f.weights, config.fusion.value_or(FusionParams{}));
  if (given("--gain")) {
    if (!config.fusion) config.fusion = FusionParams{};
    config.fusion->gain = f.gain;
  }
  if (given("--rotation")) {
    const auto r = to_doubles("--rotation", f.rotation, 3);
    config.camera.rotation_deg = {r[0], r[1], r[2]};
  }
  if (given("--mode")) config.mode = parse_render_mode(f.mode);
  if (given("--size")) std::tie(config.camera.width, config.camera.height) = to_size(f.size);
  if (given("--zoom")) config.camera.zoom = f.zoom;
  return config;
}

void require(bool ok, const char* what) {
  if (!ok) throw UsageError(what);
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(name, e);
  } catch (const std::filesystem::filesystem_error& e) {
    throw PipelineError(name, Error(ErrorCode::IoError, e.what()));
  }
}

void print_metrics(double mse_value) {
  std::cout << "mse " << mse_value << "\npsnr_db " << psnr_from_mse(mse_value) << "\n";
}

FusionParams params_for(const PipelineConfig& config, const FeatureSet& set) {
  return config.fusion.value_or(FusionParams::uniform(set.names()));
}

int run_ingest(const PipelineConfig& c) {
  require(!c.input.empty() && !c.output_dir.empty(), "ingest needs --input DIR and --output FILE");
  const Volume v = stage("input", [&] { return ingest_frames(read_frame_directory(c.input, c.spacing)); });
  stage("output", [&] {
    write_vvol(v, c.output_dir);
    return 0;
  });
  const Dims& d = v.dims();
  std::cout << "wrote " << c.output_dir.string() << " (" << d.nx << "x" << d.ny << "x" << d.nz << ")\n";
  return 0;
}

int run_filter(const PipelineConfig& c) {
  require(!c.input.empty() && !c.output_dir.empty(), "filter needs --input and --output");
  const Volume v = stage("input", [&] { return load_volume(c.input, c.spacing); });
  const Volume filtered = stage("filter", [&] {
    return c.direct_bilateral ? bilateral_direct(v, c.bilateral) : bilateral_fast(v, c.bilateral);
  });
  stage("output", [&] {
    write_vvol(filtered, c.output_dir);
    return 0;
  });
  std::cout << "wrote " << c.output_dir.string() << "\n";
  if (c.reference) {
    print_metrics(stage("metrics", [&] { return mse(filtered, load_volume(*c.reference, c.spacing)); }));
  }
  return 0;
}

int run_features(const PipelineConfig& c) {
  require(!c.input.empty() && !c.output_dir.empty(), "features needs --input and --output DIR");
  const Volume v = stage("input", [&] { return load_volume(c.input, c.spacing); });
  const FeatureSet set = stage("features", [&] { return build_feature_set(v, c.features); });
  const auto manifest = stage("output", [&] { return write_feature_set(set, c.output_dir); });
  std::cout << "wrote " << manifest.string() << "\n";
  return 0;
}

int run_fuse(const PipelineConfig& c, const std::string& manifest) {
  require(!c.input.empty() && !manifest.empty() && !c.output_dir.empty(),
          "fuse needs --input VOLUME, --features MANIFEST and --output DIR");
  const Volume v = stage("input", [&] { return load_volume(c.input, c.spacing); });
  const FeatureSet set = stage("input", [&] { return read_feature_set(manifest); });
  const FusionParams params = params_for(c, set);
  const FusedVolume fused = stage("fuse", [&] { return fuse(v, set, params); });
  const auto path = stage("output", [&] { return write_fused_volume(fused, set.size(), params, c.output_dir); });
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int run_render(const PipelineConfig& c) {
  require(!c.input.empty() && !c.output_dir.empty(), "render needs --input and --output FILE");
  const RenderedImage image = [&] {
    if (c.input.extension() == ".json") {
      const FusedVolume fused = stage("input", [&] { return read_fused_volume(c.input); });
      return stage("render", [&] { return render_fused(fused, c.camera, c.mode); });
    }
    const Volume v = stage("input", [&] { return load_volume(c.input, c.spacing); });
    return stage("render", [&] { return render_mip(v, c.camera); });
  }();
  stage("output", [&] {
    write_png(image, c.output_dir);
    return 0;
  });
  std::cout << "wrote " << c.output_dir.string() << "\n";
  return 0;
}

int run_pipeline_command(const PipelineConfig& c) {
  require(!c.input.empty() && !c.output_dir.empty(), "pipeline needs an input and an output directory");
  const PipelineResult r = run_pipeline(c);
  std::cout << "filtered " << r.filtered_path.string() << "\nfeatures " << r.manifest_path.string()
            << "\nimage " << r.image_path.string() << "\n";
  if (r.mse) print_metrics(*r.mse);
  return 0;
}

Service* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound volume filtering, feature fusion and rendering"};
  app.require_subcommand(1);
  Flags f;

  auto add_io = [&](CLI::App* sub) {
    sub->add_option("--input", f.input, "Frame directory or VVOL file");
    sub->add_option("--output", f.output, "Output path");
    sub->add_option("--config", f.config, "Pipeline config JSON (or a bare fusion params document)");
    sub->add_option("--spacing", f.spacing, "Voxel spacing sx,sy,sz for frame directories");
  };
  auto add_filter = [&](CLI::App* sub) {
    sub->add_option("--sigma-spatial", f.sigma_spatial, "Bilateral spatial sigma in voxels");
    sub->add_option("--sigma-range", f.sigma_range, "Bilateral range sigma in intensity units");
    sub->add_option("--window-radius", f.window_radius, "Bilateral cubic window half-width");
    sub->add_flag("--direct", f.direct, "Use the direct bilateral filter");
  };
  auto add_features = [&](CLI::App* sub) {
    sub->add_option("--scales", f.scales, "Frangi scales a,b,c");
    sub->add_option("--select", f.select, "Feature names to compute (sobel,gvf,frangi)");
    sub->add_flag("--bright-vessels", f.bright_vessels, "Vessels are brighter than tissue");
  };
  auto add_fusion = [&](CLI::App* sub) {
    sub->add_option("--weights", f.weights, "Feature weights name=k,...");
    sub->add_option("--gain", f.gain, "Opacity gain K");
  };
  auto add_render = [&](CLI::App* sub) {
    sub->add_option("--rotation", f.rotation, "Rotation rx,ry,rz in degrees");
    sub->add_option("--mode", f.mode, "mip | mip-color | composite");
    sub->add_option("--size", f.size, "Image size WxH");
    sub->add_option("--zoom", f.zoom, "Zoom factor");
  };

  auto* ingest = app.add_subcommand("ingest", "Stack PNG frames into a VVOL volume");
  add_io(ingest);
  auto* filter = app.add_subcommand("filter", "Bilateral-filter a volume");
  add_io(filter);
  add_filter(filter);
  filter->add_option("--reference", f.reference, "Reference volume for MSE/PSNR");
  auto* features = app.add_subcommand("features", "Compute the feature set of a volume");
  add_io(features);
  add_features(features);
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse a volume with its feature set");
  add_io(fuse_cmd);
  add_fusion(fuse_cmd);
  fuse_cmd->add_option("--features", f.features_manifest, "Feature manifest.json");
  auto* render = app.add_subcommand("render", "Render a fused.json (or MIP of a VVOL) to PNG");
  add_io(render);
  add_render(render);
  auto* pipeline = app.add_subcommand("pipeline", "Run filter, features, fuse and render");
  add_io(pipeline);
  add_filter(pipeline);
  add_features(pipeline);
  add_fusion(pipeline);
  add_render(pipeline);
  pipeline->add_option("--reference", f.reference, "Reference volume for MSE/PSNR");

  auto* phantom = app.add_subcommand("phantom", "Write an analytic test volume");
  std::string kind = "cylinder";
  std::string dims = "32";
  std::string center;
  std::string base = "cylinder";
  PhantomSpec spec;
  double radius = spec.radius;
  int axis = spec.axis;
  double amplitude = spec.noise_amplitude;
  std::uint64_t seed = spec.seed;
  double background = 0.0;
  double foreground = 0.0;
  double edge = 0.0;
  phantom->add_option("--kind", kind, "cylinder | sphere | ramp | step | noisy");
  phantom->add_option("--output", f.output, "Output VVOL")->required();
  phantom->add_option("--dims", dims, "N or NXxNYxNZ");
  phantom->add_option("--radius", radius, "Cylinder or sphere radius in voxels");
  phantom->add_option("--axis", axis, "Cylinder, ramp or step axis (0, 1, 2)");
  phantom->add_option("--center", center, "Center cx,cy,cz in voxels");
  phantom->add_option("--edge", edge, "Step edge position");
  phantom->add_option("--background", background, "Background level");
  phantom->add_option("--foreground", foreground, "Foreground level");
  phantom->add_option("--base", base, "Base geometry of the noisy phantom");
  phantom->add_option("--noise", amplitude, "Speckle amplitude");
  phantom->add_option("--seed", seed, "Speckle seed");
  phantom->add_option("--spacing", f.spacing, "Voxel spacing sx,sy,sz");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  ServiceOptions service_options;
  std::size_t max_upload_mb = service_options.max_upload_bytes >> 20;
  serve->add_option("--port", service_options.port, "Listening port (0 picks one)");
  serve->add_option("--host", service_options.host, "Listening address");
  serve->add_option("--max-sessions", service_options.max_sessions, "LRU session cap");
  serve->add_option("--max-upload-mb", max_upload_mb, "Upload size cap in MiB");
  add_filter(serve);
  add_features(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*phantom) {
      spec.kind = parse_phantom_kind(kind);
      spec.dims = to_dims(dims);
      spec.radius = radius;
      spec.axis = axis;
      spec.noise_amplitude = amplitude;
      spec.seed = seed;
      spec.base = parse_phantom_kind(base);
      if (!center.empty()) {
        const auto c = to_doubles("--center", center, 3);
        spec.center = Vec3{c[0], c[1], c[2]};
      }
      if (phantom->count("--edge")) spec.edge = edge;
      if (phantom->count("--background")) spec.background = background;
      if (phantom->count("--foreground")) spec.foreground = foreground;
      if (phantom->count("--spacing")) spec.spacing = to_spacing(f.spacing);
      const Volume v = stage("phantom", [&] { return make_phantom(spec); });
      stage("output", [&] {
        write_vvol(v, f.output);
        return 0;
      });
      std::cout << "wrote " << f.output << "\n";
      return 0;
    }
    if (*serve) {
      const PipelineConfig c = make_config(f, *serve);
      service_options.bilateral = c.bilateral;
      service_options.features = c.features;
      service_options.max_upload_bytes = max_upload_mb << 20;
      Service service(service_options);
      const int port = stage("serve", [&] { return service.bind(); });
      std::cout << "listening on http://" << service_options.host << ":" << port << std::endl;
      g_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      service.run();
      g_service = nullptr;
      return 0;
    }
    CLI::App* sub = app.get_subcommands().front();
    const PipelineConfig c = make_config(f, *sub);
    if (sub == ingest) return run_ingest(c);
    if (sub == filter) return run_filter(c);
    if (sub == features) return run_features(c);
    if (sub == fuse_cmd) return run_fuse(c, f.features_manifest);
    if (sub == render) return run_render(c);
    if (sub == pipeline) return run_pipeline_command(c);
  } catch (const UsageError& e) {
    std::cerr << "usvis: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PipelineError& e) {
    std::cerr << "usvis: " << e.what() << "\n";
    return kExitStage;
  } catch (const Error& e) {
    // Parameter errors raised while assembling the config.
    std::cerr << "usvis: stage 'config' failed: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
