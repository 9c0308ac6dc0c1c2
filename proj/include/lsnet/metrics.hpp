#pragma once

// Pixel-level evaluation: per-image precision / recall / F1 against binary
// ground truth, macro-averaged over the dataset (metrics are computed per
// image and then averaged; dataset F1 is therefore generally not the harmonic
// mean of dataset precision and recall).

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lsnet/postprocess.hpp"

namespace lsnet {

struct Confusion {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

// Pixelwise counts over binary maps of equal shape.
Confusion confusion(const SegmentationMap& pred, const SegmentationMap& gt);

struct PerImageEval {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

struct EvalResult {
  double apr = 0;  // mean per-image precision
  double arr = 0;  // mean per-image recall
  double f1 = 0;   // mean per-image F1
  std::vector<PerImageEval> per_image;
};

// Degenerate-image conventions: with no predicted pixels, precision is 1 when
// the ground truth is also empty and 0 otherwise; with empty ground truth,
// recall is 1; F1 is 0 when precision + recall = 0.
PerImageEval eval_from_confusion(const Confusion& c);

EvalResult evaluate_dataset(const std::vector<SegmentationMap>& pred,
                            const std::vector<SegmentationMap>& gt);
EvalResult evaluate_confusions(const std::vector<Confusion>& confusions);

nlohmann::json eval_to_json(const EvalResult& result);

// Plain-text table, one row per named result.
std::string eval_table(
    const std::vector<std::pair<std::string, EvalResult>>& rows);

}  // namespace lsnet
