#pragma once

// Structured run configuration: one versioned JSON document with sections
// {scene, augment, model, loss, train, eval}. Unknown keys are rejected with
// the offending key named; the file is validated before any work starts.

#include <filesystem>
#include <nlohmann/json_fwd.hpp>

#include "lsnet/model.hpp"
#include "lsnet/synthdata.hpp"
#include "lsnet/training.hpp"

namespace lsnet {

inline constexpr int kConfigVersion = 1;

struct RunConfig {
  int version = kConfigVersion;
  SceneParams scene;
  AugmentConfig augment;
  ModelConfig model = ModelConfig::desk_preset();
  LossConfig loss;
  TrainConfig train;  // augment/loss sections are folded in after parsing
  EvalProtocol eval;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

// In-place override "section.key=value" (value parsed as JSON when possible,
// else taken as a string); used by the CLI --set flag.
void apply_config_override(nlohmann::json& j, const std::string& assignment);

}  // namespace lsnet
