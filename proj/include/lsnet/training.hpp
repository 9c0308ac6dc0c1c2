#pragma once

// End-to-end optimization: Adam updates over shuffled mini-batches with
// on-the-fly augmentation, early stopping on validation loss, checkpointing,
// the segment-to-pixel evaluation chain, and the ablation run matrix.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lsnet/grid.hpp"
#include "lsnet/loss.hpp"
#include "lsnet/metrics.hpp"
#include "lsnet/model.hpp"
#include "lsnet/synthdata.hpp"

namespace lsnet {

// Training runs in single precision; double instantiations of the model and
// loss templates remain available for verification.
using TrainScalar = float;

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum1 = 0.9;
  double momentum2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 8;
  int max_epochs = 100;
  long long max_steps = 0;  // 0 = no step cap
  int early_stop_patience = 5;  // non-improving evaluations
  int eval_interval = 100;      // steps between validation passes
  AugmentConfig augment;        // p_apply = 0 disables on-the-fly augmentation
  LossConfig loss;
  GridSubset grids;
  double tau_len = 2.0;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct TrainLogEntry {
  long long step = 0;
  double train_total = 0, train_cls = 0, train_reg = 0;
  std::optional<double> val_total, val_cls, val_reg;
  double lr = 0;
  std::string timestamp;
};

struct TrainResult {
  double best_val_loss = 0;
  long long best_step = 0;
  long long final_step = 0;
  bool early_stopped = false;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::vector<TrainLogEntry> log;
};

// In-memory dataset loading; image paths resolve relative to the manifest.
// Missing images abort with an IoError listing every missing path.
std::vector<SampleRecord> load_dataset(const std::filesystem::path& manifest);

FeatureMap<TrainScalar> image_to_feature_map(const ImageRGB& image);
template <typename T>
FeatureMap<T> image_to_feature_map_t(const ImageRGB& image) {
  FeatureMap<T> m = FeatureMap<T>::zeros(3, image.height(), image.width());
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < image.height(); ++r) {
      for (int q = 0; q < image.width(); ++q) {
        m.data(c, r * image.width() + q) = T(image.ch[c](r, q));
      }
    }
  }
  return m;
}

// Flattened per-cell training tensors for the loss.
struct EncodedTargets {
  Eigen::VectorXi labels;           // cells, +1 / -1
  Mat<TrainScalar> coords;          // 4 x cells
  int positive_cells = 0;
};
EncodedTargets flatten_targets(const TargetTensor& t);

// Adam optimizer state; moment shapes mirror the parameter shapes.
struct AdamState {
  Model<TrainScalar> m;
  Model<TrainScalar> v;
  long long t = 0;
};

AdamState make_adam_state(const Model<TrainScalar>& model);
void adam_step(Model<TrainScalar>& model, const Model<TrainScalar>& grads,
               AdamState& state, const TrainConfig& cfg);

TrainResult train(const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& out_dir,
                  const std::filesystem::path* resume_checkpoint = nullptr);

TrainResult train_from_manifests(const std::filesystem::path& manifest_train,
                                 const std::filesystem::path& manifest_val,
                                 const ModelConfig& model_cfg,
                                 const TrainConfig& train_cfg,
                                 const std::filesystem::path& out_dir,
                                 const std::filesystem::path* resume = nullptr);

// Mean per-sample multi-task loss over a dataset (no augmentation).
LossReport dataset_loss(const Model<TrainScalar>& model,
                        const std::vector<SampleRecord>& set,
                        const TrainConfig& cfg);

struct EvalProtocol {
  int w_l = 2;
  enum class Binarize { kOtsu, kFixed };
  Binarize binarize = Binarize::kOtsu;
  double fixed_t = 0.5;
  double sigma_s = 1.0;
  int smooth_kernel = 5;
  double conf_threshold = 0.5;
  GridSubset grids;
  bool gt_as_pred = false;  // pipeline-identity harness
};

// forward -> probabilities -> decode -> rasterize(W_l) -> smooth -> binarize
// -> pixel confusion against the ground-truth raster at the same W_l.
EvalResult evaluate_model(const Model<TrainScalar>& model,
                          const std::vector<SampleRecord>& eval_set,
                          const EvalProtocol& protocol);
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest,
                               const EvalProtocol& protocol);

// Detections for one image in its own pixel frame.
std::vector<LineSegment> detect_segments(const Model<TrainScalar>& model,
                                         const ImageRGB& image,
                                         double conf_threshold,
                                         const GridSubset& grids);

struct AblationVariant {
  std::string method;  // table row label
  ModelConfig model;
  TrainConfig train;
};

// Axes: "downsampling", "grids", "regloss", "clsloss".
std::vector<AblationVariant> ablation_variants(const std::string& axis,
                                               const ModelConfig& base_model,
                                               const TrainConfig& base_train);

struct AblationRow {
  std::string method;
  EvalResult result;
};

std::vector<AblationRow> run_ablation_matrix(
    const ModelConfig& base_model, const TrainConfig& base_train,
    const std::vector<SampleRecord>& train_set,
    const std::vector<SampleRecord>& val_set,
    const std::vector<SampleRecord>& eval_set,
    const std::vector<std::string>& axes, const EvalProtocol& protocol,
    const std::filesystem::path& out_dir);

// Forward-only wall-clock throughput at batch 1; warm-up iterations are
// discarded. Reported, never asserted against any hardware-specific figure.
double measure_fps(const Model<TrainScalar>& model, int n_iterations);

}  // namespace lsnet
