#include "lsnet/metrics.hpp"

#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lsnet/errors.hpp"

namespace lsnet {

Confusion confusion(const SegmentationMap& pred, const SegmentationMap& gt) {
  if (pred.values.rows() != gt.values.rows() ||
      pred.values.cols() != gt.values.cols()) {
    throw ContractError("metrics: prediction and ground-truth shapes differ");
  }
  if (pred.kind != SegmentationMap::Kind::kBinary ||
      gt.kind != SegmentationMap::Kind::kBinary) {
    throw ContractError("metrics: confusion requires binary maps");
  }
  Confusion c;
  const auto p = (pred.values > 0.5);
  const auto g = (gt.values > 0.5);
  c.tp = (p && g).count();
  c.fp = (p && !g).count();
  c.fn = (!p && g).count();
  return c;
}

PerImageEval eval_from_confusion(const Confusion& c) {
  PerImageEval e;
  e.tp = c.tp;
  e.fp = c.fp;
  e.fn = c.fn;
  if (c.tp + c.fp == 0) {
    e.precision = (c.tp + c.fn == 0) ? 1.0 : 0.0;
  } else {
    e.precision = double(c.tp) / double(c.tp + c.fp);
  }
  e.recall = (c.tp + c.fn == 0) ? 1.0 : double(c.tp) / double(c.tp + c.fn);
  const double pr = e.precision + e.recall;
  e.f1 = (pr == 0.0) ? 0.0 : 2.0 * e.precision * e.recall / pr;
  return e;
}

EvalResult evaluate_confusions(const std::vector<Confusion>& confusions) {
  if (confusions.empty()) throw ConfigError("metrics: empty dataset");
  EvalResult r;
  r.per_image.reserve(confusions.size());
  double sp = 0, sr = 0, sf = 0;
  for (const auto& c : confusions) {
    const PerImageEval e = eval_from_confusion(c);
    sp += e.precision;
    sr += e.recall;
    sf += e.f1;
    r.per_image.push_back(e);
  }
  const double n = double(confusions.size());
  r.apr = sp / n;
  r.arr = sr / n;
  r.f1 = sf / n;
  return r;
}

EvalResult evaluate_dataset(const std::vector<SegmentationMap>& pred,
                            const std::vector<SegmentationMap>& gt) {
  if (pred.size() != gt.size()) {
    throw ContractError("metrics: prediction and ground-truth lists differ");
  }
  if (pred.empty()) throw ConfigError("metrics: empty dataset");
  std::vector<Confusion> cs;
  cs.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    cs.push_back(confusion(pred[i], gt[i]));
  }
  return evaluate_confusions(cs);
}

nlohmann::json eval_to_json(const EvalResult& result) {
  nlohmann::json j;
  j["apr"] = result.apr;
  j["arr"] = result.arr;
  j["f1"] = result.f1;
  j["n_images"] = result.per_image.size();
  auto& arr = j["per_image"] = nlohmann::json::array();
  for (const auto& e : result.per_image) {
    arr.push_back({{"precision", e.precision},
                   {"recall", e.recall},
                   {"f1", e.f1},
                   {"tp", e.tp},
                   {"fp", e.fp},
                   {"fn", e.fn}});
  }
  return j;
}

std::string eval_table(
    const std::vector<std::pair<std::string, EvalResult>>& rows) {
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::left << std::setw(int(name_w) + 2) << "Method"
     << std::right << std::setw(8) << "APR" << std::setw(8) << "ARR"
     << std::setw(10) << "F1 Score" << '\n';
  os << std::string(name_w + 2 + 8 + 8 + 10, '-') << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(int(name_w) + 2) << name << std::right
       << std::setw(8) << r.apr << std::setw(8) << r.arr << std::setw(10)
       << r.f1 << '\n';
  }
  return os.str();
}

}  // namespace lsnet
