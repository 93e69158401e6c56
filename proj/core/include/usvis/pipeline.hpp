#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "usvis/bilateral.hpp"
#include "usvis/features.hpp"
#include "usvis/fusion.hpp"
#include "usvis/render.hpp"

namespace usvis {

/// Failure in one named pipeline stage ("input", "filter", "features",
/// "fuse", "render", "output", "metrics").
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const Error& cause)
      : Error(cause.code(), "stage '" + stage + "' failed: " + cause.detail()),
        stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::filesystem::path input;       // frame directory or .vvol file
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> reference;
  Spacing spacing;                   // used for frame directories only
  BilateralParams bilateral;
  bool direct_bilateral = false;
  FeatureConfig features;
  std::optional<FusionParams> fusion;  // unset: uniform weights
  RenderMode mode = RenderMode::MipColor;
  Camera camera;
};

/// {"input", "output", "reference", "spacing": [sx,sy,sz],
///  "bilateral": {"sigma_spatial", "sigma_range", "window_radius", "direct"},
///  "features": {"select": [...], "scales": [...], "alpha", "beta", "c",
///               "bright_vessels", "gvf": {"mu", "iterations", "dt"}},
///  "fusion": <FusionParams>,
///  "render": {"mode", "rotation": [rx,ry,rz], "size": [w,h], "step", "zoom"}}
/// Relative paths resolve against base_dir.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});

struct PipelineResult {
  std::filesystem::path filtered_path;
  std::filesystem::path manifest_path;
  std::filesystem::path image_path;
  std::optional<double> mse;
  std::optional<double> psnr;
};

/// Loads a .vvol file or a directory of PNG frames.
Volume load_volume(const std::filesystem::path& input, Spacing spacing = {});

/// input -> bilateral -> features -> fuse -> render. Writes filtered.vvol,
/// features/manifest.json (+ one VVOL per feature) and render.png into the
/// output directory. Errors are rethrown as PipelineError.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace usvis
