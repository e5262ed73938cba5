#pragma once

#include <json.hpp>

#include "vidsum/data.hpp"
#include "vidsum/model.hpp"
#include "vidsum/train.hpp"

namespace vidsum {

// JSON round-trips for the config structs. Field names double as the config
// file schema, so keep them stable.
nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const PretrainConfig& cfg);
PretrainConfig pretrain_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const FinetuneConfig& cfg);
FinetuneConfig finetune_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::ordered_json& j);

std::string to_string(Activation a);
std::string to_string(ScoreMode m);
std::string to_string(LossKind k);
std::string to_string(InitScheme s);
Activation activation_from_string(const std::string& s);
ScoreMode score_mode_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);
InitScheme init_scheme_from_string(const std::string& s);

}  // namespace vidsum
