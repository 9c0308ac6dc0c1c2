#include "lsnet/model.hpp"

#include <nlohmann/json.hpp>

#include "lsnet/errors.hpp"

namespace lsnet {

void ModelConfig::validate() const {
  if (input_channels < 1) throw ConfigError("model: input_channels must be >= 1");
  if (channel_plan.empty()) throw ConfigError("model: channel_plan is empty");
  for (int c : channel_plan) {
    if (c < 1) throw ConfigError("model: channel_plan entries must be >= 1");
  }
  if (head_width < 1) throw ConfigError("model: head_width must be >= 1");
  const int down = 1 << stages();
  if (input_size <= 0 || input_size % down != 0) {
    throw ConfigError("model: input_size must be a positive multiple of 2^" +
                      std::to_string(stages()));
  }
  const int f = feature_side();
  if (f < 2 || f % 2 != 0) {
    throw ConfigError(
        "model: feature side input_size/2^stages must be even and >= 2; got " +
        std::to_string(f));
  }
  auto check_groups = [this](int channels) {
    const int g = groups_for(channels);
    if (g < 1 || channels % g != 0) {
      throw ConfigError("model: norm_groups " + std::to_string(g) +
                        " does not divide channel count " +
                        std::to_string(channels));
    }
  };
  for (int c : channel_plan) check_groups(c);
  check_groups(head_width);
}

ModelConfig ModelConfig::paper_preset() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_preset() {
  ModelConfig cfg;
  cfg.input_size = 256;
  cfg.channel_plan = {16, 32, 64, 128};
  cfg.head_width = 256;
  return cfg;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"input_size", cfg.input_size},
      {"input_channels", cfg.input_channels},
      {"channel_plan", cfg.channel_plan},
      {"norm_groups", cfg.norm_groups},
      {"head_width", cfg.head_width},
      {"downsampling", cfg.downsampling == Downsampling::kStridedConv
                           ? "strided_conv"
                           : "max_pool"}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.input_channels = j.at("input_channels").get<int>();
  cfg.channel_plan = j.at("channel_plan").get<std::vector<int>>();
  cfg.norm_groups = j.at("norm_groups").get<int>();
  cfg.head_width = j.at("head_width").get<int>();
  const std::string mode = j.at("downsampling").get<std::string>();
  if (mode == "strided_conv") {
    cfg.downsampling = Downsampling::kStridedConv;
  } else if (mode == "max_pool") {
    cfg.downsampling = Downsampling::kMaxPool;
  } else {
    throw ConfigError("model: unknown downsampling mode '" + mode + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace lsnet
