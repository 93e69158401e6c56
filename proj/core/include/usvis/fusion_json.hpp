#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "usvis/fusion.hpp"

namespace usvis {

/// {"weights": {name: k}, "colors": {name: {"h": deg, "s": val}}, "gain": K}
///
/// Weights are passed through normalize_weights on load. Missing colors fall
/// back to the default palette, a missing gain to 1. Malformed input throws
/// InvalidArgument; the message names the offending field.
FusionParams fusion_params_from_json(const nlohmann::json& j);
nlohmann::json fusion_params_to_json(const FusionParams& params);

/// Writes importance.vvol, base_opacity.vvol, opacity.vvol, red.vvol,
/// green.vvol, blue.vvol and fused.json into the directory. Importance is
/// divided by n^2 (its upper bound for n features) to fit VVOL's [0,1]
/// sample range; fused.json records the factor. Returns the manifest path.
std::filesystem::path write_fused_volume(const FusedVolume& fused, std::size_t feature_count,
                                         const FusionParams& params,
                                         const std::filesystem::path& directory);
FusedVolume read_fused_volume(const std::filesystem::path& manifest_path);

}  // namespace usvis
