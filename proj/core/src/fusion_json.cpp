#include "usvis/fusion_json.hpp"

#include <fstream>

#include "usvis/vvol.hpp"

namespace usvis {
namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidArgument, "field '" + field + "': " + why);
}

double number_at(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) bad_field(field, "expected a number");
  return j.get<double>();
}

}  // namespace

FusionParams fusion_params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad_field("params", "expected an object");
  FusionParams params;

  if (!j.contains("weights")) bad_field("weights", "missing");
  const auto& weights = j.at("weights");
  if (!weights.is_object() || weights.empty()) bad_field("weights", "expected a non-empty object");
  std::vector<double> raw;
  for (const auto& [name, value] : weights.items()) {
    const double w = number_at(value, "weights." + name);
    if (!std::isfinite(w) || w < 0.0) bad_field("weights." + name, "must be a nonnegative number");
    params.features.push_back({name, w, default_color(name)});
    raw.push_back(w);
  }
  std::vector<double> normalized;
  try {
    normalized = normalize_weights(raw);
  } catch (const Error& e) {
    throw Error(e.code(), "field 'weights': " + e.detail());
  }
  for (std::size_t i = 0; i < normalized.size(); ++i) params.features[i].weight = normalized[i];

  if (j.contains("colors")) {
    const auto& colors = j.at("colors");
    if (!colors.is_object()) bad_field("colors", "expected an object");
    for (const auto& [name, value] : colors.items()) {
      const std::string field = "colors." + name;
      if (!value.is_object()) bad_field(field, "expected {\"h\": deg, \"s\": val}");
      HueSaturation color = default_color(name);
      if (value.contains("h")) color.hue = number_at(value.at("h"), field + ".h");
      if (value.contains("s")) color.saturation = number_at(value.at("s"), field + ".s");
      if (!(color.saturation >= 0.0 && color.saturation <= 1.0)) bad_field(field + ".s", "must be in [0,1]");
      if (!std::isfinite(color.hue)) bad_field(field + ".h", "must be finite");
      auto it = std::find_if(params.features.begin(), params.features.end(),
                             [&](const FeatureWeight& f) { return f.name == name; });
      if (it == params.features.end()) {
        // A color without a weight: the feature takes part with weight 0.
        params.features.push_back({name, 0.0, color});
      } else {
        it->color = color;
      }
    }
  }

  if (j.contains("gain")) {
    params.gain = number_at(j.at("gain"), "gain");
    if (!std::isfinite(params.gain)) bad_field("gain", "must be finite");
    if (params.gain < 0.0) throw Error(ErrorCode::NegativeGain, "field 'gain': must be >= 0");
  }
  return params;
}

nlohmann::json fusion_params_to_json(const FusionParams& params) {
  nlohmann::json j;
  j["weights"] = nlohmann::json::object();
  j["colors"] = nlohmann::json::object();
  for (const auto& f : params.features) {
    j["weights"][f.name] = f.weight;
    j["colors"][f.name] = {{"h", f.color.hue}, {"s", f.color.saturation}};
  }
  j["gain"] = params.gain;
  return j;
}

std::filesystem::path write_fused_volume(const FusedVolume& fused, std::size_t feature_count,
                                         const FusionParams& params,
                                         const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  const double scale = std::max<double>(1.0, static_cast<double>(feature_count * feature_count));
  const Dims d = fused.dims();

  ScalarGrid importance(d);
  ScalarGrid red(d);
  ScalarGrid green(d);
  ScalarGrid blue(d);
  for (std::size_t i = 0; i < importance.size(); ++i) {
    importance[i] = static_cast<float>(std::min(1.0, fused.importance[i] / scale));
    red[i] = fused.color[i].r;
    green[i] = fused.color[i].g;
    blue[i] = fused.color[i].b;
  }
  auto grid_volume = [&](const ScalarGrid& g) {
    return Volume(d, fused.spacing, std::vector<float>(g.values().begin(), g.values().end()));
  };
  write_vvol(grid_volume(importance), directory / "importance.vvol");
  write_vvol(grid_volume(fused.base_opacity), directory / "base_opacity.vvol");
  write_vvol(grid_volume(fused.opacity), directory / "opacity.vvol");
  write_vvol(grid_volume(red), directory / "red.vvol");
  write_vvol(grid_volume(green), directory / "green.vvol");
  write_vvol(grid_volume(blue), directory / "blue.vvol");

  nlohmann::json manifest{
      {"dims", {d.nx, d.ny, d.nz}},
      {"spacing", {fused.spacing.sx, fused.spacing.sy, fused.spacing.sz}},
      {"importance_scale", scale},
      {"files",
       {{"importance", "importance.vvol"},
        {"base_opacity", "base_opacity.vvol"},
        {"opacity", "opacity.vvol"},
        {"red", "red.vvol"},
        {"green", "green.vvol"},
        {"blue", "blue.vvol"}}},
      {"params", fusion_params_to_json(params)}};
  const auto path = directory / "fused.json";
  const std::string text = manifest.dump(2) + "\n";
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
  return path;
}

FusedVolume read_fused_volume(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    const auto bytes = read_file_bytes(manifest_path);
    manifest = nlohmann::json::parse(reinterpret_cast<const char*>(bytes.data()),
                                     reinterpret_cast<const char*>(bytes.data()) + bytes.size());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  auto load = [&](const char* key) {
    if (!manifest.contains("files") || !manifest["files"].contains(key)) {
      throw Error(ErrorCode::InvalidArgument, std::string("fused manifest lacks '") + key + "'");
    }
    return read_vvol(dir / manifest["files"][key].get<std::string>());
  };
  const double scale = manifest.value("importance_scale", 1.0);
  const Volume importance = load("importance");
  const Volume base = load("base_opacity");
  const Volume opacity = load("opacity");
  const Volume red = load("red");
  const Volume green = load("green");
  const Volume blue = load("blue");
  const Dims d = opacity.dims();
  for (const Volume* v : {&importance, &base, &red, &green, &blue}) {
    if (!(v->dims() == d)) throw Error(ErrorCode::DimsMismatch, "fused volumes differ in dims");
  }

  FusedVolume fused;
  fused.spacing = opacity.spacing();
  fused.importance = ScalarGrid(d);
  fused.base_opacity = ScalarGrid(d);
  fused.opacity = ScalarGrid(d);
  fused.color = Grid3<Rgb>(d);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    fused.importance[i] = static_cast<float>(importance[i] * scale);
    fused.base_opacity[i] = base[i];
    fused.opacity[i] = opacity[i];
    fused.color[i] = Rgb{red[i], green[i], blue[i]};
  }
  return fused;
}

}  // namespace usvis
