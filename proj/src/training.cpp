#include "lsnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "lsnet/errors.hpp"
#include "lsnet/png_io.hpp"

namespace lsnet {

namespace {

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

AdamState make_adam_state(const Model<TrainScalar>& model) {
  return AdamState{make_zero_like(model), make_zero_like(model), 0};
}

void adam_step(Model<TrainScalar>& model, const Model<TrainScalar>& grads,
               AdamState& state, const TrainConfig& cfg) {
  ++state.t;
  const TrainScalar b1 = TrainScalar(cfg.momentum1);
  const TrainScalar b2 = TrainScalar(cfg.momentum2);
  const TrainScalar lr = TrainScalar(cfg.learning_rate);
  const TrainScalar eps = TrainScalar(cfg.adam_epsilon);
  const TrainScalar bc1 = TrainScalar(1) - std::pow(b1, TrainScalar(state.t));
  const TrainScalar bc2 = TrainScalar(1) - std::pow(b2, TrainScalar(state.t));

  auto params = parameter_refs(model);
  auto gs = parameter_refs(const_cast<Model<TrainScalar>&>(grads));
  auto ms = parameter_refs(state.m);
  auto vs = parameter_refs(state.v);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].mat;
    const auto& g = *gs[i].mat;
    auto& m = *ms[i].mat;
    auto& v = *vs[i].mat;
    m = b1 * m + (TrainScalar(1) - b1) * g;
    v = (b2 * v.array() + (TrainScalar(1) - b2) * g.array().square()).matrix();
    p.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

namespace {

// Per-sample loss tensors from ground truth restricted to the grid subset.
EncodedTargets encode_sample(const SampleRecord& rec, const GridSpec& spec,
                             const TrainConfig& cfg) {
  TargetTensor t = encode_targets(rec.segments, spec, cfg.tau_len);
  t = mask_parity_classes(std::move(t), cfg.grids);
  return flatten_targets(t);
}

struct SampleLoss {
  LossReport report;
  FeatureMap<TrainScalar> dcls;
  FeatureMap<TrainScalar> dreg;
};

SampleLoss sample_loss_and_grads(const FeatureMap<TrainScalar>& cls_logits,
                                 const FeatureMap<TrainScalar>& reg_out,
                                 const EncodedTargets& targets,
                                 const LossConfig& loss_cfg, bool with_grads) {
  SampleLoss out;
  Mat<TrainScalar> dlogits, dreg;
  out.report = multitask_loss_logits<TrainScalar>(
      cls_logits.data, targets.labels, reg_out.data, targets.coords, loss_cfg,
      with_grads ? &dlogits : nullptr, with_grads ? &dreg : nullptr);
  if (with_grads) {
    out.dcls = cls_logits;
    out.dcls.data = std::move(dlogits);
    out.dreg = reg_out;
    out.dreg.data = std::move(dreg);
  }
  return out;
}

void write_log_line(std::ofstream& os, const TrainLogEntry& e) {
  nlohmann::json j;
  j["step"] = e.step;
  j["train_total"] = e.train_total;
  j["train_cls"] = e.train_cls;
  j["train_reg"] = e.train_reg;
  if (e.val_total) {
    j["val_total"] = *e.val_total;
    j["val_cls"] = *e.val_cls;
    j["val_reg"] = *e.val_reg;
  }
  j["lr"] = e.lr;
  j["timestamp"] = e.timestamp;
  os << j.dump() << '\n';
  os.flush();
}

std::string sanitize_dirname(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
      c = '_';
    }
  }
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive and finite");
  }
  if (momentum1 < 0 || momentum1 >= 1 || momentum2 < 0 || momentum2 >= 1) {
    throw ConfigError("train: momenta must lie in [0, 1)");
  }
  if (adam_epsilon <= 0) throw ConfigError("train: adam_epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (early_stop_patience < 1) {
    throw ConfigError("train: early_stop_patience must be >= 1");
  }
  if (eval_interval < 1) throw ConfigError("train: eval_interval must be >= 1");
  if (tau_len < 0) throw ConfigError("train: tau_len must be >= 0");
  if (workers < 1) throw ConfigError("train: workers must be >= 1");
  if (!grids.any()) throw ConfigError("train: empty grid subset");
  augment.validate();
  loss.validate();
}

std::vector<SampleRecord> load_dataset(const std::filesystem::path& manifest) {
  const auto entries = read_manifest(manifest);
  const auto base = manifest.parent_path();
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    if (!std::filesystem::exists(base / e.image_path)) {
      missing.push_back((base / e.image_path).string());
    }
  }
  if (!missing.empty()) {
    std::string msg = "dataset: missing images:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  std::vector<SampleRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    SampleRecord rec;
    rec.image = read_png(base / e.image_path);
    rec.segments = manifest_segments(e);
    rec.seed = e.seed;
    rec.provenance = "manifest";
    out.push_back(std::move(rec));
  }
  return out;
}

FeatureMap<TrainScalar> image_to_feature_map(const ImageRGB& image) {
  return image_to_feature_map_t<TrainScalar>(image);
}

EncodedTargets flatten_targets(const TargetTensor& t) {
  EncodedTargets out;
  const int n = t.rows * t.cols;
  out.labels.resize(n);
  out.coords.resize(4, n);
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      const int idx = t.index(r, c);
      out.labels[idx] = t.labels(r, c);
      if (t.labels(r, c) == 1) ++out.positive_cells;
      for (int k = 0; k < 4; ++k) {
        out.coords(k, idx) = TrainScalar(t.coords(idx, k));
      }
    }
  }
  return out;
}

LossReport dataset_loss(const Model<TrainScalar>& model,
                        const std::vector<SampleRecord>& set,
                        const TrainConfig& cfg) {
  const GridSpec spec =
      build_grid_spec(model.config.input_size, model.config.cell_size());
  double total = 0, cls = 0, reg = 0;
  long long positives = 0;
  for (const auto& rec : set) {
    std::vector<FeatureMap<TrainScalar>> batch{image_to_feature_map(rec.image)};
    const auto out = forward(model, batch, RunMode::kEval);
    const EncodedTargets targets = encode_sample(rec, spec, cfg);
    const auto sl = sample_loss_and_grads(out.cls_logits[0], out.reg_out[0],
                                          targets, cfg.loss, false);
    total += sl.report.total;
    cls += sl.report.cls_term;
    reg += sl.report.reg_term;
    positives += sl.report.positive_cell_count;
  }
  LossReport rep;
  const double n = double(set.size());
  rep.total = total / n;
  rep.cls_term = cls / n;
  rep.reg_term = reg / n;
  rep.positive_cell_count = int(positives);
  return rep;
}

TrainResult train(const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& out_dir,
                  const std::filesystem::path* resume_checkpoint) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("train: empty training or validation set");
  }
  std::filesystem::create_directories(out_dir);

  Model<TrainScalar> model;
  long long step = 0;
  if (resume_checkpoint) {
    auto ck = load_checkpoint<TrainScalar>(*resume_checkpoint);
    model = std::move(ck.model);
    step = ck.step;
  } else {
    model = init_model<TrainScalar>(model_cfg, train_cfg.seed);
  }
  const GridSpec spec =
      build_grid_spec(model.config.input_size, model.config.cell_size());

  AdamState adam = make_adam_state(model);

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.final_checkpoint = out_dir / "final.ckpt";
  result.log_path = out_dir / "train_log.jsonl";
  std::ofstream log_os(result.log_path);
  if (!log_os) {
    throw IoError("train: cannot open log " + result.log_path.string());
  }

  std::mt19937_64 shuffle_gen(fold_seed(train_cfg.seed, 0xd));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = std::numeric_limits<double>::infinity();
  long long best_step = -1;
  int bad_evals = 0;
  std::uint64_t sample_counter = 0;
  bool stop = false;
  long long last_eval_step = -1;

  auto run_validation = [&](TrainLogEntry& entry) {
    const LossReport v = dataset_loss(model, val_set, train_cfg);
    entry.val_total = v.total;
    entry.val_cls = v.cls_term;
    entry.val_reg = v.reg_term;
    last_eval_step = step;
    if (v.total < best_val) {
      best_val = v.total;
      best_step = step;
      bad_evals = 0;
      save_checkpoint(result.best_checkpoint, model, step);
    } else {
      ++bad_evals;
      if (bad_evals >= train_cfg.early_stop_patience) stop = true;
    }
  };

  for (int epoch = 0; epoch < train_cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_gen);
    for (std::size_t off = 0; off < order.size() && !stop;
         off += std::size_t(train_cfg.batch_size)) {
      const std::size_t bsz =
          std::min(std::size_t(train_cfg.batch_size), order.size() - off);

      std::vector<FeatureMap<TrainScalar>> batch;
      std::vector<EncodedTargets> targets;
      batch.reserve(bsz);
      targets.reserve(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        SampleRecord rec = train_set[order[off + i]];
        Rng aug_rng(fold_seed(train_cfg.seed, 0xa000000 + sample_counter++));
        if (train_cfg.augment.p_apply > 0) {
          on_the_fly_augment(rec, train_cfg.augment, aug_rng);
        }
        targets.push_back(encode_sample(rec, spec, train_cfg));
        batch.push_back(image_to_feature_map(rec.image));
      }

      std::vector<SampleTrace<TrainScalar>> traces;
      const auto out = forward(model, batch, RunMode::kTrain, &traces);

      Model<TrainScalar> grads = make_zero_like(model);
      double total = 0, cls = 0, reg = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        auto sl = sample_loss_and_grads(out.cls_logits[i], out.reg_out[i],
                                        targets[i], train_cfg.loss, true);
        total += sl.report.total;
        cls += sl.report.cls_term;
        reg += sl.report.reg_term;
        const TrainScalar inv_b = TrainScalar(1.0 / double(bsz));
        sl.dcls.data *= inv_b;
        sl.dreg.data *= inv_b;
        backward(model, traces[i], sl.dcls, sl.dreg, grads);
      }
      total /= double(bsz);
      cls /= double(bsz);
      reg /= double(bsz);
      if (!std::isfinite(total)) {
        throw NumericError("train: non-finite loss at step " +
                           std::to_string(step + 1) + " (cls " +
                           std::to_string(cls) + ", reg " +
                           std::to_string(reg) + ")");
      }

      adam_step(model, grads, adam, train_cfg);
      ++step;

      TrainLogEntry entry;
      entry.step = step;
      entry.train_total = total;
      entry.train_cls = cls;
      entry.train_reg = reg;
      entry.lr = train_cfg.learning_rate;
      entry.timestamp = iso_timestamp();
      if (step % train_cfg.eval_interval == 0) run_validation(entry);
      write_log_line(log_os, entry);
      result.log.push_back(std::move(entry));

      if (train_cfg.max_steps > 0 && step >= train_cfg.max_steps) stop = true;
    }
  }

  // Make sure at least one validation pass happened and the best checkpoint
  // exists even for very short runs.
  if (last_eval_step != step) {
    TrainLogEntry entry;
    entry.step = step;
    entry.lr = train_cfg.learning_rate;
    entry.timestamp = iso_timestamp();
    if (!result.log.empty()) {
      entry.train_total = result.log.back().train_total;
      entry.train_cls = result.log.back().train_cls;
      entry.train_reg = result.log.back().train_reg;
    }
    run_validation(entry);
    write_log_line(log_os, entry);
    result.log.push_back(std::move(entry));
  }

  save_checkpoint(result.final_checkpoint, model, step);
  result.best_val_loss = best_val;
  result.best_step = best_step;
  result.final_step = step;
  result.early_stopped = stop && !(train_cfg.max_steps > 0 &&
                                   step >= train_cfg.max_steps);
  return result;
}

TrainResult train_from_manifests(const std::filesystem::path& manifest_train,
                                 const std::filesystem::path& manifest_val,
                                 const ModelConfig& model_cfg,
                                 const TrainConfig& train_cfg,
                                 const std::filesystem::path& out_dir,
                                 const std::filesystem::path* resume) {
  return train(load_dataset(manifest_train), load_dataset(manifest_val),
               model_cfg, train_cfg, out_dir, resume);
}

std::vector<LineSegment> detect_segments(const Model<TrainScalar>& model,
                                         const ImageRGB& image,
                                         double conf_threshold,
                                         const GridSubset& grids) {
  const GridSpec spec =
      build_grid_spec(model.config.input_size, model.config.cell_size());
  std::vector<FeatureMap<TrainScalar>> batch{image_to_feature_map(image)};
  const auto out = forward(model, batch, RunMode::kEval);
  Eigen::MatrixXd probs = class_probabilities(out.cls_logits[0]);
  probs = mask_parity_classes(std::move(probs), grids);
  return decode_predictions(probs, regression_lattice(out.reg_out[0]), spec,
                            conf_threshold);
}

EvalResult evaluate_model(const Model<TrainScalar>& model,
                          const std::vector<SampleRecord>& eval_set,
                          const EvalProtocol& protocol) {
  if (eval_set.empty()) throw ConfigError("eval: empty dataset");
  std::vector<Confusion> confusions;
  confusions.reserve(eval_set.size());
  for (const auto& rec : eval_set) {
    const int h = rec.image.height();
    const int w = rec.image.width();
    std::vector<LineSegment> pred;
    if (protocol.gt_as_pred) {
      pred = rec.segments;
      for (auto& s : pred) s.confidence = 1.0;
    } else {
      pred = detect_segments(model, rec.image, protocol.conf_threshold,
                             protocol.grids);
    }
    SegmentationMap pred_map = rasterize_segments(pred, protocol.w_l, h, w);
    pred_map = smooth_map(pred_map, protocol.sigma_s, protocol.smooth_kernel);
    SegmentationMap pred_bin =
        protocol.binarize == EvalProtocol::Binarize::kOtsu
            ? otsu_binarize(pred_map).map
            : fixed_binarize(pred_map, protocol.fixed_t);

    const SegmentationMap gt_raster =
        rasterize_segments(rec.segments, protocol.w_l, h, w);
    const SegmentationMap gt_bin = fixed_binarize(gt_raster, 0.0);
    confusions.push_back(confusion(pred_bin, gt_bin));
  }
  return evaluate_confusions(confusions);
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest,
                               const EvalProtocol& protocol) {
  auto ck = load_checkpoint<TrainScalar>(checkpoint);
  return evaluate_model(ck.model, load_dataset(manifest), protocol);
}

std::vector<AblationVariant> ablation_variants(const std::string& axis,
                                               const ModelConfig& base_model,
                                               const TrainConfig& base_train) {
  std::vector<AblationVariant> out;
  auto push = [&](std::string name, auto&& tweak) {
    AblationVariant v{std::move(name), base_model, base_train};
    tweak(v);
    out.push_back(std::move(v));
  };
  if (axis == "downsampling") {
    push("LS-Net-P", [](AblationVariant& v) {
      v.model.downsampling = Downsampling::kMaxPool;
    });
    push("LS-Net-S", [](AblationVariant& v) {
      v.model.downsampling = Downsampling::kStridedConv;
    });
  } else if (axis == "grids") {
    const std::pair<const char*, const char*> rows[] = {
        {"LS-Net-1-M", "M"},      {"LS-Net-2-MH", "MH"},
        {"LS-Net-2-MV", "MV"},    {"LS-Net-2-MC", "MC"},
        {"LS-Net-3-MHC", "MHC"},  {"LS-Net-3-MVC", "MVC"},
        {"LS-Net-3-MVH", "MVH"},  {"LS-Net-4-MHVC", "MHVC"}};
    for (const auto& [name, letters] : rows) {
      push(name, [letters = letters](AblationVariant& v) {
        v.train.grids = GridSubset::from_string(letters);
      });
    }
  } else if (axis == "regloss") {
    const std::pair<const char*, LossConfig::Reg> rows[] = {
        {"LS-Net-2 (L2)", LossConfig::Reg::kL2},
        {"LS-Net-1 (L1)", LossConfig::Reg::kL1},
        {"LS-Net-S (Smooth L1)", LossConfig::Reg::kSmoothL1},
        {"LS-Net-W (Wing loss)", LossConfig::Reg::kWing}};
    for (const auto& [name, variant] : rows) {
      push(name, [variant = variant](AblationVariant& v) {
        v.train.loss.reg_variant = variant;
      });
    }
  } else if (axis == "clsloss") {
    push("LS-Net-CE (Cross Entropy loss)", [](AblationVariant& v) {
      v.train.loss.cls_variant = LossConfig::Cls::kCrossEntropy;
    });
    push("LS-Net-FL (Focal Loss)", [](AblationVariant& v) {
      v.train.loss.cls_variant = LossConfig::Cls::kFocal;
    });
  } else {
    throw ConfigError("ablate: unknown axis '" + axis +
                      "'; expected downsampling|grids|regloss|clsloss");
  }
  return out;
}

std::vector<AblationRow> run_ablation_matrix(
    const ModelConfig& base_model, const TrainConfig& base_train,
    const std::vector<SampleRecord>& train_set,
    const std::vector<SampleRecord>& val_set,
    const std::vector<SampleRecord>& eval_set,
    const std::vector<std::string>& axes, const EvalProtocol& protocol,
    const std::filesystem::path& out_dir) {
  std::vector<AblationRow> rows;
  for (const auto& axis : axes) {
    for (const auto& variant : ablation_variants(axis, base_model, base_train)) {
      const auto run_dir = out_dir / axis / sanitize_dirname(variant.method);
      const TrainResult tr =
          train(train_set, val_set, variant.model, variant.train, run_dir);
      auto ck = load_checkpoint<TrainScalar>(tr.best_checkpoint);
      EvalProtocol proto = protocol;
      proto.grids = variant.train.grids;
      rows.push_back({variant.method, evaluate_model(ck.model, eval_set, proto)});
    }
  }
  return rows;
}

double measure_fps(const Model<TrainScalar>& model, int n_iterations) {
  if (n_iterations < 10) {
    throw ConfigError("fps: need at least 10 timed iterations");
  }
  const auto& cfg = model.config;
  FeatureMap<TrainScalar> img =
      FeatureMap<TrainScalar>::zeros(cfg.input_channels, cfg.input_size,
                                     cfg.input_size);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data(i) = dist(gen);
  std::vector<FeatureMap<TrainScalar>> batch{img};

  for (int i = 0; i < 3; ++i) forward(model, batch, RunMode::kEval);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n_iterations; ++i) forward(model, batch, RunMode::kEval);
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return n_iterations / s;
}

}  // namespace lsnet
