#pragma once

#include <string>

#include <json.hpp>

#include "d4d/model_spec.hpp"

namespace d4d {

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Whole-document form used by the CLI and corpus files:
// {"input_shape":[...], "layers":[...], "train":{...}}
// Only single-input (sequential-style) specs round-trip through this form.
nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string model_config_to_string(const ModelConfig& mc);
ModelConfig model_config_from_string(const std::string& text);

}  // namespace d4d
