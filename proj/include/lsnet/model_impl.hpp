#pragma once

// Template definitions for model.hpp.

#include <fstream>
#include <nlohmann/json.hpp>

#include "lsnet/errors.hpp"

namespace lsnet {

namespace detail {

template <typename T>
ConvBlock<T> make_conv_block(int in_c, int out_c, int k, int stride, int pad) {
  ConvBlock<T> b;
  b.in_c = in_c;
  b.out_c = out_c;
  b.k = k;
  b.stride = stride;
  b.pad = pad;
  b.filter = Mat<T>::Zero(out_c, k * k * in_c);
  b.bias = Mat<T>::Zero(out_c, 1);
  b.gn_scale = Mat<T>::Ones(out_c, 1);
  b.gn_offset = Mat<T>::Zero(out_c, 1);
  return b;
}

template <typename T>
OutLayer<T> make_out_layer(int in_c, int out_c) {
  OutLayer<T> l;
  l.in_c = in_c;
  l.out_c = out_c;
  l.filter = Mat<T>::Zero(out_c, in_c);
  l.bias = Mat<T>::Zero(out_c, 1);
  return l;
}

// Zero-filled model with the shapes implied by the config.
template <typename T>
Model<T> make_model_shell(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config = config;
  const bool strided = config.downsampling == Downsampling::kStridedConv;
  int in_c = config.input_channels;
  for (int s = 0; s < config.stages(); ++s) {
    const int out_c = config.channel_plan[std::size_t(s)];
    m.backbone.push_back(make_conv_block<T>(in_c, out_c, 3, 1, 1));
    m.backbone.push_back(make_conv_block<T>(out_c, out_c, 3, 1, 1));
    m.backbone.push_back(make_conv_block<T>(out_c, out_c, 3, strided ? 2 : 1, 1));
    in_c = out_c;
  }
  m.cls_trans = make_conv_block<T>(in_c, config.head_width, 2, 1, 0);
  m.reg_trans = make_conv_block<T>(in_c, config.head_width, 2, 1, 0);
  m.cls_out = make_out_layer<T>(config.head_width, 2);
  m.reg_out = make_out_layer<T>(config.head_width, 4);
  return m;
}

}  // namespace detail

template <typename T>
std::vector<TensorRef<T>> parameter_refs(Model<T>& model) {
  std::vector<TensorRef<T>> refs;
  for (std::size_t b = 0; b < model.backbone.size(); ++b) {
    const std::string prefix = "stage" + std::to_string(b / 3 + 1) + ".block" +
                               std::to_string(b % 3 + 1) + ".";
    auto& blk = model.backbone[b];
    refs.push_back({prefix + "filter", &blk.filter});
    refs.push_back({prefix + "bias", &blk.bias});
    refs.push_back({prefix + "gn_scale", &blk.gn_scale});
    refs.push_back({prefix + "gn_offset", &blk.gn_offset});
  }
  auto head = [&refs](const std::string& name, ConvBlock<T>& trans,
                      OutLayer<T>& out) {
    refs.push_back({"head." + name + ".trans.filter", &trans.filter});
    refs.push_back({"head." + name + ".trans.bias", &trans.bias});
    refs.push_back({"head." + name + ".trans.gn_scale", &trans.gn_scale});
    refs.push_back({"head." + name + ".trans.gn_offset", &trans.gn_offset});
    refs.push_back({"head." + name + ".out.filter", &out.filter});
    refs.push_back({"head." + name + ".out.bias", &out.bias});
  };
  head("cls", model.cls_trans, model.cls_out);
  head("reg", model.reg_trans, model.reg_out);
  return refs;
}

template <typename T>
long long count_parameters(const Model<T>& model) {
  long long n = 0;
  for (const auto& ref : parameter_refs(const_cast<Model<T>&>(model))) {
    n += ref.mat->size();
  }
  return n;
}

template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  Model<T> m = detail::make_model_shell<T>(config);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto he_fill = [&](Mat<T>& filter, int fan_in) {
    const double std = std::sqrt(2.0 / fan_in);
    for (Eigen::Index i = 0; i < filter.size(); ++i) {
      filter(i) = T(dist(gen) * std);
    }
  };
  for (auto& blk : m.backbone) he_fill(blk.filter, blk.k * blk.k * blk.in_c);
  he_fill(m.cls_trans.filter, 4 * m.cls_trans.in_c);
  he_fill(m.reg_trans.filter, 4 * m.reg_trans.in_c);
  he_fill(m.cls_out.filter, m.cls_out.in_c);
  he_fill(m.reg_out.filter, m.reg_out.in_c);
  return m;
}

template <typename T>
Model<T> make_zero_like(const Model<T>& model) {
  Model<T> z = detail::make_model_shell<T>(model.config);
  for (auto& ref : parameter_refs(z)) ref.mat->setZero();
  return z;
}

namespace detail {

template <typename T>
FeatureMap<T> conv_block_forward(const ConvBlock<T>& b, int groups,
                                 const FeatureMap<T>& x, LayerTrace<T>* lt) {
  LayerTrace<T> local;
  LayerTrace<T>& t = lt ? *lt : local;
  t.z = conv_forward(x, b.filter, b.bias, b.k, b.stride, b.pad);
  FeatureMap<T> gn_out =
      group_norm_forward(t.z, groups, b.gn_scale, b.gn_offset, t.gn);
  t.act = relu(gn_out);
  return t.act;
}

// Reverse of conv_block_forward; returns the gradient at the block input.
template <typename T>
FeatureMap<T> conv_block_backward(const ConvBlock<T>& b, ConvBlock<T>& g,
                                  int groups, const FeatureMap<T>& x,
                                  const LayerTrace<T>& t,
                                  const FeatureMap<T>& dact) {
  FeatureMap<T> da = relu_backward(t.act, dact);
  FeatureMap<T> dz = group_norm_backward(t.z, groups, b.gn_scale, t.gn, da,
                                         g.gn_scale, g.gn_offset);
  return conv_backward(x, b.filter, b.k, b.stride, b.pad, dz, g.filter, g.bias);
}

}  // namespace detail

template <typename T>
ForwardResult<T> forward(const Model<T>& model,
                         const std::vector<FeatureMap<T>>& batch, RunMode,
                         std::vector<SampleTrace<T>>* traces) {
  const auto& cfg = model.config;
  ForwardResult<T> out;
  out.cls_logits.reserve(batch.size());
  out.reg_out.reserve(batch.size());
  if (traces) {
    traces->clear();
    traces->resize(batch.size());
  }
  const bool pool_mode = cfg.downsampling == Downsampling::kMaxPool;

  for (std::size_t si = 0; si < batch.size(); ++si) {
    const FeatureMap<T>& img = batch[si];
    if (img.channels != cfg.input_channels || img.height != cfg.input_size ||
        img.width != cfg.input_size) {
      throw ContractError("model: input shape does not match config (" +
                          std::to_string(img.channels) + "x" +
                          std::to_string(img.height) + "x" +
                          std::to_string(img.width) + ")");
    }
    SampleTrace<T> local;
    SampleTrace<T>* tr = traces ? &(*traces)[si] : &local;
    const bool keep = traces != nullptr;
    if (keep) {
      tr->input = img;
      tr->layers.resize(model.backbone.size());
      tr->pool_index.resize(std::size_t(cfg.stages()));
    }

    FeatureMap<T> cur = img;
    for (int s = 0; s < cfg.stages(); ++s) {
      for (int j = 0; j < 3; ++j) {
        const std::size_t bi = std::size_t(3 * s + j);
        const auto& blk = model.backbone[bi];
        cur = detail::conv_block_forward(blk, cfg.groups_for(blk.out_c), cur,
                                         keep ? &tr->layers[bi] : nullptr);
      }
      if (pool_mode) {
        PoolIndex idx;
        cur = maxpool2x2_forward(cur, idx);
        if (keep) tr->pool_index[std::size_t(s)] = std::move(idx);
      }
    }
    if (keep) tr->features = cur;

    FeatureMap<T> cls_act = detail::conv_block_forward(
        model.cls_trans, cfg.groups_for(cfg.head_width), cur,
        keep ? &tr->cls_trans : nullptr);
    FeatureMap<T> reg_act = detail::conv_block_forward(
        model.reg_trans, cfg.groups_for(cfg.head_width), cur,
        keep ? &tr->reg_trans : nullptr);

    FeatureMap<T> cls_logits;
    cls_logits.channels = 2;
    cls_logits.height = cls_act.height;
    cls_logits.width = cls_act.width;
    cls_logits.data.noalias() = model.cls_out.filter * cls_act.data;
    cls_logits.data.colwise() += model.cls_out.bias.col(0);

    FeatureMap<T> reg;
    reg.channels = 4;
    reg.height = reg_act.height;
    reg.width = reg_act.width;
    reg.data.noalias() = model.reg_out.filter * reg_act.data;
    reg.data.colwise() += model.reg_out.bias.col(0);

    out.cls_logits.push_back(std::move(cls_logits));
    out.reg_out.push_back(std::move(reg));
  }
  return out;
}

template <typename T>
void backward(const Model<T>& model, const SampleTrace<T>& trace,
              const FeatureMap<T>& dcls_logits, const FeatureMap<T>& dreg_out,
              Model<T>& grads) {
  const auto& cfg = model.config;
  const int head_groups = cfg.groups_for(cfg.head_width);

  // 1x1 output layers.
  auto out_backward = [](const OutLayer<T>& l, OutLayer<T>& g,
                         const FeatureMap<T>& act, const FeatureMap<T>& dy) {
    g.filter.noalias() += dy.data * act.data.transpose();
    g.bias.col(0).noalias() += dy.data.rowwise().sum();
    FeatureMap<T> dact = act;
    dact.data.noalias() = l.filter.transpose() * dy.data;
    return dact;
  };
  FeatureMap<T> dcls_act = out_backward(model.cls_out, grads.cls_out,
                                        trace.cls_trans.act, dcls_logits);
  FeatureMap<T> dreg_act = out_backward(model.reg_out, grads.reg_out,
                                        trace.reg_trans.act, dreg_out);

  // Transformation layers; both heads feed from the same feature map.
  FeatureMap<T> dfeat =
      detail::conv_block_backward(model.cls_trans, grads.cls_trans, head_groups,
                                  trace.features, trace.cls_trans, dcls_act);
  FeatureMap<T> dfeat_reg =
      detail::conv_block_backward(model.reg_trans, grads.reg_trans, head_groups,
                                  trace.features, trace.reg_trans, dreg_act);
  dfeat.data += dfeat_reg.data;

  // Backbone, reversed.
  const bool pool_mode = cfg.downsampling == Downsampling::kMaxPool;
  FeatureMap<T> dcur = std::move(dfeat);
  for (int s = cfg.stages() - 1; s >= 0; --s) {
    if (pool_mode) {
      const auto& pre_pool = trace.layers[std::size_t(3 * s + 2)].act;
      dcur = maxpool2x2_backward(pre_pool, trace.pool_index[std::size_t(s)],
                                 dcur);
    }
    for (int j = 2; j >= 0; --j) {
      const std::size_t bi = std::size_t(3 * s + j);
      const auto& blk = model.backbone[bi];
      const FeatureMap<T>& x =
          bi == 0 ? trace.input : trace.layers[bi - 1].act;
      // Stage boundary: the previous entity is the pool output in pool mode.
      if (pool_mode && j == 0 && s > 0) {
        // Recompute the pooled input of this stage from the previous stage.
        PoolIndex idx;
        FeatureMap<T> pooled = maxpool2x2_forward(
            trace.layers[std::size_t(3 * s - 1)].act, idx);
        dcur = detail::conv_block_backward(blk, grads.backbone[bi],
                                           cfg.groups_for(blk.out_c), pooled,
                                           trace.layers[bi], dcur);
      } else {
        dcur = detail::conv_block_backward(blk, grads.backbone[bi],
                                           cfg.groups_for(blk.out_c), x,
                                           trace.layers[bi], dcur);
      }
    }
  }
}

template <typename T>
Eigen::MatrixXd class_probabilities(const FeatureMap<T>& cls_logits) {
  const Arr<T> p = softmax_positive_prob(cls_logits);
  Eigen::MatrixXd out(cls_logits.height, cls_logits.width);
  for (int r = 0; r < cls_logits.height; ++r) {
    for (int c = 0; c < cls_logits.width; ++c) {
      out(r, c) = double(p(0, r * cls_logits.width + c));
    }
  }
  return out;
}

template <typename T>
Eigen::Matrix<double, Eigen::Dynamic, 4> regression_lattice(
    const FeatureMap<T>& reg_out) {
  if (reg_out.channels != 4) {
    throw ContractError("model: regressor map must have 4 channels");
  }
  Eigen::Matrix<double, Eigen::Dynamic, 4> out(reg_out.pixels(), 4);
  for (int p = 0; p < reg_out.pixels(); ++p) {
    for (int c = 0; c < 4; ++c) out(p, c) = double(reg_out.data(c, p));
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     long long step) {
  auto refs = parameter_refs(const_cast<Model<T>&>(model));
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& ref : refs) {
    tensors.push_back({{"name", ref.name},
                       {"rows", ref.mat->rows()},
                       {"cols", ref.mat->cols()},
                       {"dtype", sizeof(T) == 4 ? "f4" : "f8"}});
  }
  nlohmann::json header = {{"format_version", 1},
                           {"step", step},
                           {"config", model_config_to_json(model.config)},
                           {"tensors", tensors}};
  const std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path.string());
  os.write("LSNETCK1", 8);
  const std::uint64_t len = hs.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& ref : refs) {
    os.write(reinterpret_cast<const char*>(ref.mat->data()),
             std::streamsize(sizeof(T) * std::size_t(ref.mat->size())));
  }
  if (!os) throw IoError("checkpoint: write failed: " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "LSNETCK1") {
    throw IoError("checkpoint: bad magic in " + path.string());
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  is.read(hs.data(), std::streamsize(len));
  if (!is) throw IoError("checkpoint: truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: corrupt header in " + path.string() + ": " +
                  e.what());
  }
  Checkpoint<T> ck;
  ck.step = header.at("step").get<long long>();
  ck.model = detail::make_model_shell<T>(
      model_config_from_json(header.at("config")));
  auto refs = parameter_refs(ck.model);
  for (const auto& tj : header.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    const auto rows = tj.at("rows").get<Eigen::Index>();
    const auto cols = tj.at("cols").get<Eigen::Index>();
    const std::string dtype = tj.at("dtype").get<std::string>();
    auto it = std::find_if(refs.begin(), refs.end(),
                           [&](const auto& r) { return r.name == name; });
    if (it == refs.end()) {
      throw IoError("checkpoint: unknown tensor '" + name + "' in " +
                    path.string());
    }
    if (it->mat->rows() != rows || it->mat->cols() != cols) {
      throw IoError("checkpoint: shape mismatch for '" + name + "' in " +
                    path.string());
    }
    const std::size_t n = std::size_t(rows) * std::size_t(cols);
    if (dtype == (sizeof(T) == 4 ? "f4" : "f8")) {
      is.read(reinterpret_cast<char*>(it->mat->data()),
              std::streamsize(sizeof(T) * n));
    } else if (dtype == "f4") {
      std::vector<float> buf(n);
      is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(4 * n));
      for (std::size_t i = 0; i < n; ++i) (*it->mat)(Eigen::Index(i)) = T(buf[i]);
    } else if (dtype == "f8") {
      std::vector<double> buf(n);
      is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(8 * n));
      for (std::size_t i = 0; i < n; ++i) (*it->mat)(Eigen::Index(i)) = T(buf[i]);
    } else {
      throw IoError("checkpoint: unknown dtype '" + dtype + "'");
    }
  }
  if (!is) throw IoError("checkpoint: truncated tensor data in " + path.string());
  return ck;
}

}  // namespace lsnet
