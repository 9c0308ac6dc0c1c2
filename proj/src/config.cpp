#include "lsnet/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "lsnet/errors.hpp"

namespace lsnet {

namespace {

// Tracks which keys a section reader consumed and rejects the rest.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name)
      : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: " + name_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: bad value type for " + name_ + "." + key);
    }
  }

  void read_range(const std::string& key, Range& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 2) {
      throw ConfigError("config: " + name_ + "." + key + " must be [lo, hi]");
    }
    out.lo = v[0].get<double>();
    out.hi = v[1].get<double>();
  }

  void read_int_range(const std::string& key, IntRange& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 2) {
      throw ConfigError("config: " + name_ + "." + key + " must be [lo, hi]");
    }
    out.lo = v[0].get<int>();
    out.hi = v[1].get<int>();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("config: unknown key " + name_ + "." + item.key());
      }
    }
  }

  const nlohmann::json& raw() const { return j_; }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

const nlohmann::json kEmptyObject = nlohmann::json::object();

const nlohmann::json& section_or_empty(const nlohmann::json& j,
                                       const std::string& key) {
  return j.contains(key) ? j.at(key) : kEmptyObject;
}

SceneParams parse_scene(const nlohmann::json& j) {
  Section s(j, "scene");
  SceneParams p;
  s.read_int_range("n_cables", p.n_cables);
  s.read("sag", p.sag);
  s.read("polyline_steps", p.polyline_steps);
  s.read_range("cable_width", p.cable_width);
  s.read_range("cable_intensity", p.cable_intensity);
  s.read_range("spacing", p.spacing);
  s.read_range("angle", p.angle);
  s.read("background_source", p.background_source);
  s.finish();
  p.validate();
  return p;
}

AugmentConfig parse_augment(const nlohmann::json& j) {
  Section s(j, "augment");
  AugmentConfig a;
  s.read("p_apply", a.p_apply);
  s.read("noise_mu", a.noise_mu);
  s.read_range("noise_sigma", a.noise_sigma);
  s.read_range("blur_sigma", a.blur_sigma);
  s.read("blur_kernel", a.blur_kernel);
  s.read_range("brightness", a.color.brightness);
  s.read_range("contrast", a.color.contrast);
  s.read_range("saturation", a.color.saturation);
  s.read_range("hue", a.color.hue);
  s.read("grayscale_prob", a.grayscale_prob);
  s.read_range("elastic_alpha", a.elastic_alpha);
  s.read_range("elastic_sigma", a.elastic_sigma);
  s.read_range("zoom_crop", a.zoom_crop);
  s.read_range("rotation", a.rotation);
  s.read("flip_h_prob", a.flip_h_prob);
  s.read("flip_v_prob", a.flip_v_prob);
  s.finish();
  a.validate();
  return a;
}

ModelConfig parse_model(const nlohmann::json& j) {
  Section s(j, "model");
  ModelConfig m = ModelConfig::desk_preset();
  if (s.has("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "paper") m = ModelConfig::paper_preset();
    else if (preset == "desk") m = ModelConfig::desk_preset();
    else throw ConfigError("config: unknown model.preset '" + preset + "'");
  }
  s.read("input_size", m.input_size);
  s.read("input_channels", m.input_channels);
  s.read("channel_plan", m.channel_plan);
  s.read("norm_groups", m.norm_groups);
  s.read("head_width", m.head_width);
  if (s.has("downsampling")) {
    const std::string d = j.at("downsampling").get<std::string>();
    if (d == "strided_conv") m.downsampling = Downsampling::kStridedConv;
    else if (d == "max_pool") m.downsampling = Downsampling::kMaxPool;
    else throw ConfigError("config: unknown model.downsampling '" + d + "'");
  }
  s.finish();
  m.validate();
  return m;
}

LossConfig parse_loss(const nlohmann::json& j) {
  Section s(j, "loss");
  LossConfig l;
  s.read("lambda", l.lambda);
  s.read("gamma", l.gamma);
  s.read("alpha", l.alpha);
  s.read("wing_w", l.wing_w);
  s.read("wing_epsilon", l.wing_epsilon);
  if (s.has("cls_variant")) {
    const std::string v = j.at("cls_variant").get<std::string>();
    if (v == "focal") l.cls_variant = LossConfig::Cls::kFocal;
    else if (v == "cross_entropy") l.cls_variant = LossConfig::Cls::kCrossEntropy;
    else throw ConfigError("config: unknown loss.cls_variant '" + v + "'");
  }
  if (s.has("reg_variant")) {
    const std::string v = j.at("reg_variant").get<std::string>();
    if (v == "wing") l.reg_variant = LossConfig::Reg::kWing;
    else if (v == "l1") l.reg_variant = LossConfig::Reg::kL1;
    else if (v == "l2") l.reg_variant = LossConfig::Reg::kL2;
    else if (v == "smooth_l1") l.reg_variant = LossConfig::Reg::kSmoothL1;
    else throw ConfigError("config: unknown loss.reg_variant '" + v + "'");
  }
  s.finish();
  l.validate();
  return l;
}

void parse_binarize(const std::string& v, EvalProtocol& e) {
  if (v == "otsu") {
    e.binarize = EvalProtocol::Binarize::kOtsu;
    return;
  }
  if (v.rfind("fixed:", 0) == 0) {
    e.binarize = EvalProtocol::Binarize::kFixed;
    try {
      e.fixed_t = std::stod(v.substr(6));
    } catch (...) {
      throw ConfigError("config: bad fixed threshold in '" + v + "'");
    }
    if (e.fixed_t < 0 || e.fixed_t > 1) {
      throw ConfigError("config: fixed threshold must lie in [0, 1]");
    }
    return;
  }
  throw ConfigError("config: binarize must be 'otsu' or 'fixed:<t>', got '" +
                    v + "'");
}

EvalProtocol parse_eval(const nlohmann::json& j) {
  Section s(j, "eval");
  EvalProtocol e;
  s.read("wl", e.w_l);
  if (s.has("binarize")) parse_binarize(j.at("binarize").get<std::string>(), e);
  s.read("sigma_s", e.sigma_s);
  s.read("smooth_kernel", e.smooth_kernel);
  s.read("conf_threshold", e.conf_threshold);
  if (s.has("grids")) {
    e.grids = GridSubset::from_string(j.at("grids").get<std::string>());
  }
  s.finish();
  if (e.w_l < 1) throw ConfigError("config: eval.wl must be >= 1");
  if (e.smooth_kernel < 1 || e.smooth_kernel % 2 == 0) {
    throw ConfigError("config: eval.smooth_kernel must be odd and positive");
  }
  return e;
}

TrainConfig parse_train(const nlohmann::json& j) {
  Section s(j, "train");
  TrainConfig t;
  s.read("learning_rate", t.learning_rate);
  s.read("momentum1", t.momentum1);
  s.read("momentum2", t.momentum2);
  s.read("adam_epsilon", t.adam_epsilon);
  s.read("batch_size", t.batch_size);
  s.read("max_epochs", t.max_epochs);
  s.read("max_steps", t.max_steps);
  s.read("early_stop_patience", t.early_stop_patience);
  s.read("eval_interval", t.eval_interval);
  s.read("tau_len", t.tau_len);
  s.read("seed", t.seed);
  s.read("workers", t.workers);
  if (s.has("grids")) {
    t.grids = GridSubset::from_string(j.at("grids").get<std::string>());
  }
  s.finish();
  return t;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: document must be an object");
  static const std::set<std::string> kSections{
      "version", "scene", "augment", "model", "loss", "train", "eval"};
  for (const auto& item : j.items()) {
    if (!kSections.count(item.key())) {
      throw ConfigError("config: unknown key " + item.key());
    }
  }
  RunConfig cfg;
  if (j.contains("version")) cfg.version = j.at("version").get<int>();
  if (cfg.version != kConfigVersion) {
    throw ConfigError("config: unsupported version " +
                      std::to_string(cfg.version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  cfg.scene = parse_scene(section_or_empty(j, "scene"));
  cfg.augment = parse_augment(section_or_empty(j, "augment"));
  cfg.model = parse_model(section_or_empty(j, "model"));
  cfg.loss = parse_loss(section_or_empty(j, "loss"));
  cfg.train = parse_train(section_or_empty(j, "train"));
  cfg.eval = parse_eval(section_or_empty(j, "eval"));
  cfg.train.augment = cfg.augment;
  cfg.train.loss = cfg.loss;
  cfg.train.validate();
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["version"] = cfg.version;
  j["scene"] = {
      {"n_cables", {cfg.scene.n_cables.lo, cfg.scene.n_cables.hi}},
      {"sag", cfg.scene.sag},
      {"polyline_steps", cfg.scene.polyline_steps},
      {"cable_width", {cfg.scene.cable_width.lo, cfg.scene.cable_width.hi}},
      {"cable_intensity",
       {cfg.scene.cable_intensity.lo, cfg.scene.cable_intensity.hi}},
      {"spacing", {cfg.scene.spacing.lo, cfg.scene.spacing.hi}},
      {"angle", {cfg.scene.angle.lo, cfg.scene.angle.hi}},
      {"background_source", cfg.scene.background_source}};
  const auto& a = cfg.augment;
  j["augment"] = {{"p_apply", a.p_apply},
                  {"noise_mu", a.noise_mu},
                  {"noise_sigma", {a.noise_sigma.lo, a.noise_sigma.hi}},
                  {"blur_sigma", {a.blur_sigma.lo, a.blur_sigma.hi}},
                  {"blur_kernel", a.blur_kernel},
                  {"brightness", {a.color.brightness.lo, a.color.brightness.hi}},
                  {"contrast", {a.color.contrast.lo, a.color.contrast.hi}},
                  {"saturation", {a.color.saturation.lo, a.color.saturation.hi}},
                  {"hue", {a.color.hue.lo, a.color.hue.hi}},
                  {"grayscale_prob", a.grayscale_prob},
                  {"elastic_alpha", {a.elastic_alpha.lo, a.elastic_alpha.hi}},
                  {"elastic_sigma", {a.elastic_sigma.lo, a.elastic_sigma.hi}},
                  {"zoom_crop", {a.zoom_crop.lo, a.zoom_crop.hi}},
                  {"rotation", {a.rotation.lo, a.rotation.hi}},
                  {"flip_h_prob", a.flip_h_prob},
                  {"flip_v_prob", a.flip_v_prob}};
  j["model"] = model_config_to_json(cfg.model);
  j["loss"] = {
      {"lambda", cfg.loss.lambda},
      {"gamma", cfg.loss.gamma},
      {"alpha", cfg.loss.alpha},
      {"wing_w", cfg.loss.wing_w},
      {"wing_epsilon", cfg.loss.wing_epsilon},
      {"cls_variant",
       cfg.loss.cls_variant == LossConfig::Cls::kFocal ? "focal"
                                                       : "cross_entropy"},
      {"reg_variant",
       [&] {
         switch (cfg.loss.reg_variant) {
           case LossConfig::Reg::kWing: return "wing";
           case LossConfig::Reg::kL1: return "l1";
           case LossConfig::Reg::kL2: return "l2";
           case LossConfig::Reg::kSmoothL1: return "smooth_l1";
         }
         return "wing";
       }()}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"momentum1", cfg.train.momentum1},
                {"momentum2", cfg.train.momentum2},
                {"adam_epsilon", cfg.train.adam_epsilon},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"max_steps", cfg.train.max_steps},
                {"early_stop_patience", cfg.train.early_stop_patience},
                {"eval_interval", cfg.train.eval_interval},
                {"tau_len", cfg.train.tau_len},
                {"seed", cfg.train.seed},
                {"workers", cfg.train.workers},
                {"grids", cfg.train.grids.to_string()}};
  j["eval"] = {{"wl", cfg.eval.w_l},
               {"binarize",
                cfg.eval.binarize == EvalProtocol::Binarize::kOtsu
                    ? std::string("otsu")
                    : "fixed:" + std::to_string(cfg.eval.fixed_t)},
               {"sigma_s", cfg.eval.sigma_s},
               {"smooth_kernel", cfg.eval.smooth_kernel},
               {"conf_threshold", cfg.eval.conf_threshold},
               {"grids", cfg.eval.grids.to_string()}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " +
                      e.what());
  }
  return run_config_from_json(j);
}

void apply_config_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("config: --set expects section.key=value, got '" +
                      assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // plain string
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("config: bad --set path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace lsnet
