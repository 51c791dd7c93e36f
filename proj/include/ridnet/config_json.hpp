#pragma once

#include "json.hpp"

#include "ridnet/data.hpp"
#include "ridnet/training.hpp"

namespace ridnet {

// Missing keys keep the value already in the target, so a partial document
// layers over defaults.
void to_json(nlohmann::json& j, const GraphConfig& c);
void from_json(const nlohmann::json& j, GraphConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const WindowSpec& w);
void from_json(const nlohmann::json& j, WindowSpec& w);

}  // namespace ridnet
