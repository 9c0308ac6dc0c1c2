#pragma once

// The LS-Net network: a fully convolutional feature extractor (stages of two
// stride-1 3x3 convolutions plus one downsampling step), a shared-structure
// pair of heads, each an unpadded 2x2 transformation layer followed by an
// unpadded 1x1 output layer (2 classifier channels / 4 regressor channels).
// Every backbone and transformation convolution is followed by group
// normalization then a rectifier; the 1x1 outputs stay raw.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <random>

#include "lsnet/nn.hpp"

namespace lsnet {

enum class Downsampling { kStridedConv, kMaxPool };

struct ModelConfig {
  int input_size = 512;
  int input_channels = 3;
  std::vector<int> channel_plan{64, 128, 256, 512};
  int norm_groups = 0;  // 0 = min(32, channels) per layer
  int head_width = 512;
  Downsampling downsampling = Downsampling::kStridedConv;

  int stages() const { return int(channel_plan.size()); }
  int feature_side() const { return input_size >> stages(); }
  int lattice_side() const { return feature_side() - 1; }
  int s_m() const { return feature_side() / 2; }
  int cell_size() const { return input_size / s_m(); }
  int groups_for(int channels) const {
    return norm_groups == 0 ? std::min(32, channels) : norm_groups;
  }

  void validate() const;  // throws ConfigError naming the violated invariant

  static ModelConfig paper_preset();
  static ModelConfig desk_preset();
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename T>
struct ConvBlock {
  Mat<T> filter;  // out_c x (k*k*in_c)
  Mat<T> bias;    // out_c x 1
  Mat<T> gn_scale;
  Mat<T> gn_offset;
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
};

template <typename T>
struct OutLayer {
  Mat<T> filter;  // out_c x in_c (1x1)
  Mat<T> bias;
  int in_c = 0, out_c = 0;
};

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<ConvBlock<T>> backbone;  // 3 blocks per stage
  ConvBlock<T> cls_trans, reg_trans;   // unpadded 2x2, stride 1
  OutLayer<T> cls_out, reg_out;        // unpadded 1x1, raw outputs
};

template <typename T>
struct TensorRef {
  std::string name;
  Mat<T>* mat;
};

template <typename T>
std::vector<TensorRef<T>> parameter_refs(Model<T>& model);

template <typename T>
long long count_parameters(const Model<T>& model);

// He-style fan-in Gaussian filters, zero biases, unit normalization scales.
template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Same parameter shapes with every tensor set to zero (gradient holder).
template <typename T>
Model<T> make_zero_like(const Model<T>& model);

enum class RunMode { kTrain, kEval };

template <typename T>
struct LayerTrace {
  FeatureMap<T> z;    // conv output, pre-normalization
  FeatureMap<T> act;  // post-rectifier output (next layer's input)
  GroupNormStats<T> gn;
};

template <typename T>
struct SampleTrace {
  FeatureMap<T> input;
  std::vector<LayerTrace<T>> layers;  // backbone, in order
  std::vector<PoolIndex> pool_index;  // per stage (max_pool mode only)
  FeatureMap<T> features;             // head input
  LayerTrace<T> cls_trans, reg_trans;
};

template <typename T>
struct ForwardResult {
  std::vector<FeatureMap<T>> cls_logits;  // [B] of 2 x L x L
  std::vector<FeatureMap<T>> reg_out;     // [B] of 4 x L x L
};

template <typename T>
ForwardResult<T> forward(const Model<T>& model,
                         const std::vector<FeatureMap<T>>& batch, RunMode mode,
                         std::vector<SampleTrace<T>>* traces = nullptr);

// Accumulates parameter gradients for one traced sample given the gradients
// of the raw head outputs.
template <typename T>
void backward(const Model<T>& model, const SampleTrace<T>& trace,
              const FeatureMap<T>& dcls_logits, const FeatureMap<T>& dreg_out,
              Model<T>& grads);

// Lattice-shaped positive-class probability, row-major (row, col).
template <typename T>
Eigen::MatrixXd class_probabilities(const FeatureMap<T>& cls_logits);

// Lattice-shaped (L*L) x 4 view of the regressor output, cell-major.
template <typename T>
Eigen::Matrix<double, Eigen::Dynamic, 4> regression_lattice(
    const FeatureMap<T>& reg_out);

// Checkpoint archive: JSON header (config + step + tensor table) followed by
// raw little-endian column-major tensor data. Canonical tensor names
// (stage{i}.block{j}.*, head.{cls|reg}.{trans|out}.*) are part of the
// cross-implementation contract.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     long long step);

template <typename T>
struct Checkpoint {
  Model<T> model;
  long long step = 0;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace lsnet

#include "lsnet/model_impl.hpp"
