// lsnet command line: dataset generation, training, evaluation, single-image
// detection with overlay output, and the ablation matrix.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric
// failure during optimization.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "lsnet/config.hpp"
#include "lsnet/errors.hpp"
#include "lsnet/png_io.hpp"
#include "lsnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

lsnet::RunConfig load_config_with_overrides(const std::string& path,
                                            const std::vector<std::string>& sets) {
  std::ifstream is(path);
  if (!is) throw lsnet::IoError("config: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw lsnet::ConfigError("config: parse error in " + path + ": " + e.what());
  }
  for (const auto& s : sets) lsnet::apply_config_override(j, s);
  return lsnet::run_config_from_json(j);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw lsnet::IoError("cannot open " + path.string());
  os << text;
  if (!os) throw lsnet::IoError("write failed: " + path.string());
}

int cmd_generate(const std::string& config_path,
                 const std::vector<std::string>& sets, const fs::path& out_dir,
                 int n_images, std::uint64_t seed, int crops, int backgrounds,
                 bool flips) {
  const lsnet::RunConfig cfg = load_config_with_overrides(config_path, sets);
  if (n_images < 1) throw lsnet::ConfigError("generate: --n must be >= 1");

  const fs::path image_dir = out_dir / "images";
  std::vector<fs::path> written;
  try {
    std::filesystem::create_directories(image_dir);
    std::vector<lsnet::SampleRecord> records;
    records.reserve(std::size_t(n_images));
    for (int i = 0; i < n_images; ++i) {
      records.push_back(lsnet::render_scene(cfg.scene, cfg.model.input_size,
                                            lsnet::fold_seed(seed, i)));
    }
    if (crops > 0) {
      const auto pool = lsnet::BackgroundPool::open(cfg.scene.background_source);
      records = lsnet::make_offline_set(records, crops, std::max(backgrounds, 1),
                                        flips, pool, cfg.augment);
    }
    std::vector<lsnet::ManifestEntry> entries;
    entries.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%06zu.png", i);
      const fs::path img_path = image_dir / name;
      lsnet::write_png(records[i].image, img_path);
      written.push_back(img_path);
      lsnet::ManifestEntry e;
      e.image_path = (fs::path("images") / name).string();
      e.width = records[i].image.width();
      e.height = records[i].image.height();
      e.seed = records[i].seed;
      for (const auto& s : records[i].segments) {
        e.segments.push_back({s.x1, s.y1, s.x2, s.y2});
      }
      entries.push_back(std::move(e));
    }
    const fs::path manifest = out_dir / "manifest.jsonl";
    written.push_back(manifest);
    lsnet::write_manifest(manifest, entries);
    std::cout << "generated " << entries.size() << " images under " << out_dir
              << "\n";
    return 0;
  } catch (...) {
    // Partial outputs are removed before the error propagates.
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    throw;
  }
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& sets, const fs::path& data_dir,
              std::string train_manifest, std::string val_manifest,
              const fs::path& out_dir, const std::string& resume) {
  const lsnet::RunConfig cfg = load_config_with_overrides(config_path, sets);
  if (train_manifest.empty()) {
    train_manifest = (data_dir / "train" / "manifest.jsonl").string();
  }
  if (val_manifest.empty()) {
    val_manifest = (data_dir / "val" / "manifest.jsonl").string();
  }
  for (const auto& m : {train_manifest, val_manifest}) {
    if (!fs::exists(m)) throw lsnet::IoError("train: missing manifest " + m);
  }
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "resolved_config.json",
                  lsnet::run_config_to_json(cfg).dump(2) + "\n");

  const fs::path resume_path = resume;
  const auto result = lsnet::train_from_manifests(
      train_manifest, val_manifest, cfg.model, cfg.train, out_dir,
      resume.empty() ? nullptr : &resume_path);
  std::cout << "trained " << result.final_step << " steps; best val loss "
            << result.best_val_loss << " at step " << result.best_step
            << "\ncheckpoint: " << result.best_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             lsnet::EvalProtocol proto, const fs::path& out_prefix,
             int fps_iterations) {
  auto ck = lsnet::load_checkpoint<lsnet::TrainScalar>(checkpoint);
  const auto eval_set = lsnet::load_dataset(manifest);
  const lsnet::EvalResult result =
      lsnet::evaluate_model(ck.model, eval_set, proto);

  json report = lsnet::eval_to_json(result);
  if (fps_iterations > 0) {
    report["fps"] = lsnet::measure_fps(ck.model, fps_iterations);
  }
  const std::string table = lsnet::eval_table({{"LS-Net", result}});
  if (!out_prefix.empty()) {
    if (out_prefix.has_parent_path()) {
      std::filesystem::create_directories(out_prefix.parent_path());
    }
    write_text_file(fs::path(out_prefix.string() + ".json"),
                    report.dump(2) + "\n");
    write_text_file(fs::path(out_prefix.string() + ".txt"), table);
  }
  std::cout << table;
  return 0;
}

int cmd_detect(const std::string& checkpoint, const std::string& image_path,
               const std::string& overlay_path, const std::string& json_path,
               double threshold, int w_l) {
  auto ck = lsnet::load_checkpoint<lsnet::TrainScalar>(checkpoint);
  const lsnet::ImageRGB original = lsnet::read_png(image_path);
  const int s = ck.model.config.input_size;
  lsnet::ImageRGB input = original;
  if (original.height() != s || original.width() != s) {
    input = lsnet::resize_bilinear(original, s, s);
  }
  auto segments = lsnet::detect_segments(ck.model, input, threshold,
                                         lsnet::GridSubset::all());
  // Back to the original pixel frame.
  const double sx = double(original.width()) / s;
  const double sy = double(original.height()) / s;
  for (auto& seg : segments) {
    seg.x1 *= sx;
    seg.x2 *= sx;
    seg.y1 *= sy;
    seg.y2 *= sy;
  }

  if (!json_path.empty()) {
    json out;
    out["image"] = image_path;
    out["width"] = original.width();
    out["height"] = original.height();
    auto& arr = out["segments"] = json::array();
    for (const auto& seg : segments) {
      arr.push_back({{"x1", seg.x1},
                     {"y1", seg.y1},
                     {"x2", seg.x2},
                     {"y2", seg.y2},
                     {"confidence", seg.confidence.value_or(1.0)}});
    }
    write_text_file(json_path, out.dump(2) + "\n");
  }
  if (!overlay_path.empty()) {
    const auto raster = lsnet::rasterize_segments(
        segments, w_l, original.height(), original.width());
    lsnet::ImageRGB overlay = original;
    overlay.ch[0] = overlay.ch[0].max(raster.values);
    overlay.ch[1] = overlay.ch[1] * (1.0 - raster.values);
    overlay.ch[2] = overlay.ch[2] * (1.0 - raster.values);
    lsnet::write_png(overlay, overlay_path);
  }
  std::cout << "detected " << segments.size() << " segments\n";
  return 0;
}

int cmd_ablate(const std::string& config_path,
               const std::vector<std::string>& sets, const fs::path& data_dir,
               const std::string& axes_csv, int seeds, const fs::path& out_dir) {
  const lsnet::RunConfig cfg = load_config_with_overrides(config_path, sets);
  std::vector<std::string> axes;
  for (std::size_t start = 0; start < axes_csv.size();) {
    const auto comma = axes_csv.find(',', start);
    axes.push_back(axes_csv.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (axes.empty()) throw lsnet::ConfigError("ablate: no axes given");

  const auto train_set =
      lsnet::load_dataset(data_dir / "train" / "manifest.jsonl");
  const auto val_set = lsnet::load_dataset(data_dir / "val" / "manifest.jsonl");
  const fs::path eval_manifest =
      fs::exists(data_dir / "eval" / "manifest.jsonl")
          ? data_dir / "eval" / "manifest.jsonl"
          : data_dir / "val" / "manifest.jsonl";
  const auto eval_set = lsnet::load_dataset(eval_manifest);

  std::filesystem::create_directories(out_dir);
  json all = json::array();
  std::string tables;
  for (int si = 0; si < std::max(seeds, 1); ++si) {
    lsnet::TrainConfig tcfg = cfg.train;
    tcfg.seed = lsnet::fold_seed(cfg.train.seed, std::uint64_t(si));
    const auto rows = lsnet::run_ablation_matrix(
        cfg.model, tcfg, train_set, val_set, eval_set, axes, cfg.eval,
        out_dir / ("seed" + std::to_string(si)));
    std::vector<std::pair<std::string, lsnet::EvalResult>> named;
    for (const auto& r : rows) {
      named.emplace_back(r.method, r.result);
      all.push_back({{"seed", si},
                     {"method", r.method},
                     {"apr", r.result.apr},
                     {"arr", r.result.arr},
                     {"f1", r.result.f1}});
    }
    const std::string table = lsnet::eval_table(named);
    tables += "seed " + std::to_string(si) + "\n" + table + "\n";
  }
  write_text_file(out_dir / "results.txt", tables);
  write_text_file(out_dir / "results.json", all.dump(2) + "\n");
  std::cout << tables;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LS-Net line-segment detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, manifest, image_path;
  std::string train_manifest, val_manifest, resume;
  std::string overlay_path, json_path, axes = "grids";
  std::string binarize = "otsu", grids = "MHVC";
  fs::path out_dir = "out", data_dir = "data", out_prefix;
  int n_images = 10, crops = 0, backgrounds = 1, fps_iterations = 0;
  int w_l = 2, smooth_kernel = 5, seeds = 1;
  double sigma_s = 1.0, threshold = 0.5;
  std::uint64_t seed = 0;
  bool flips = false, gt_as_pred = false;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("generate", "Render an annotated dataset");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--n", n_images);
  gen->add_option("--seed", seed);
  gen->add_option("--crops", crops);
  gen->add_option("--backgrounds", backgrounds);
  gen->add_flag("--flips", flips);
  gen->add_option("--set", sets);

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--data", data_dir);
  tr->add_option("--train-manifest", train_manifest);
  tr->add_option("--val-manifest", val_manifest);
  tr->add_option("--out", out_dir)->required();
  tr->add_option("--resume", resume);
  tr->add_option("--set", sets);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--manifest", manifest)->required();
  ev->add_option("--wl", w_l);
  ev->add_option("--binarize", binarize);
  ev->add_option("--sigma-s", sigma_s);
  ev->add_option("--kernel", smooth_kernel);
  ev->add_option("--threshold", threshold);
  ev->add_option("--grids", grids);
  ev->add_flag("--gt-as-pred", gt_as_pred);
  ev->add_option("--measure-fps", fps_iterations);
  ev->add_option("--out", out_prefix);

  auto* det = app.add_subcommand("detect", "Detect segments in one image");
  det->add_option("--checkpoint", checkpoint)->required();
  det->add_option("--image", image_path)->required();
  det->add_option("--overlay", overlay_path);
  det->add_option("--json", json_path);
  det->add_option("--threshold", threshold);
  det->add_option("--wl", w_l);

  auto* ab = app.add_subcommand("ablate", "Run the ablation matrix");
  ab->add_option("--config", config_path)->required();
  ab->add_option("--data", data_dir);
  ab->add_option("--axes", axes);
  ab->add_option("--seeds", seeds);
  ab->add_option("--out", out_dir)->required();
  ab->add_option("--set", sets);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(config_path, sets, out_dir, n_images, seed, crops,
                          backgrounds, flips);
    }
    if (tr->parsed()) {
      return cmd_train(config_path, sets, data_dir, train_manifest,
                       val_manifest, out_dir, resume);
    }
    if (ev->parsed()) {
      lsnet::EvalProtocol proto;
      proto.w_l = w_l;
      proto.sigma_s = sigma_s;
      proto.smooth_kernel = smooth_kernel;
      proto.conf_threshold = threshold;
      proto.grids = lsnet::GridSubset::from_string(grids);
      proto.gt_as_pred = gt_as_pred;
      if (binarize == "otsu") {
        proto.binarize = lsnet::EvalProtocol::Binarize::kOtsu;
      } else if (binarize.rfind("fixed:", 0) == 0) {
        proto.binarize = lsnet::EvalProtocol::Binarize::kFixed;
        proto.fixed_t = std::stod(binarize.substr(6));
      } else {
        throw lsnet::ConfigError("eval: --binarize must be otsu or fixed:<t>");
      }
      return cmd_eval(checkpoint, manifest, proto, out_prefix, fps_iterations);
    }
    if (det->parsed()) {
      return cmd_detect(checkpoint, image_path, overlay_path, json_path,
                        threshold, w_l);
    }
    if (ab->parsed()) {
      return cmd_ablate(config_path, sets, data_dir, axes, seeds, out_dir);
    }
  } catch (const lsnet::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lsnet::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lsnet::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const lsnet::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
