#pragma once

#include "json.hpp"

#include "hypergoal/evalrt.hpp"
#include "hypergoal/toyenv.hpp"
#include "hypergoal/trainer.hpp"

namespace hypergoal {

// Every field is written; reading requires every field to be present.
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const ShapingConfig& c);
void from_json(const nlohmann::json& j, ShapingConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RolloutConfig& c);
void from_json(const nlohmann::json& j, RolloutConfig& c);

}  // namespace hypergoal
