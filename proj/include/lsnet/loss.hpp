#pragma once

// Weighted multi-task loss: Focal classification over every lattice cell plus
// Wing endpoint regression over positive cells only, with the swap-invariant
// endpoint error d = min(sum|t - e|, sum|t - swap(e)|). Ablation alternatives:
// plain cross-entropy for classification; L1 / L2 / smooth-L1 for regression
// (the swap-min branch is selected first, then the variant's penalty applies).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "lsnet/errors.hpp"
#include "lsnet/nn.hpp"

namespace lsnet {

struct LossConfig {
  double lambda = 1.0;        // regression weight
  double gamma = 2.0;         // focal focusing parameter
  double alpha = 0.25;        // focal class weighting
  double wing_w = 10.0;       // wing nonlinear range bound
  double wing_epsilon = 2.0;  // wing curvature constant
  enum class Cls { kFocal, kCrossEntropy };
  enum class Reg { kWing, kL1, kL2, kSmoothL1 };
  Cls cls_variant = Cls::kFocal;
  Reg reg_variant = Reg::kWing;

  void validate() const {
    if (!(gamma >= 0)) throw ConfigError("loss: gamma must be >= 0");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("loss: alpha must lie in [0, 1]");
    if (!(wing_w > 0)) throw ConfigError("loss: wing w must be > 0");
    if (!(wing_epsilon > 0)) throw ConfigError("loss: wing epsilon must be > 0");
    if (!std::isfinite(lambda)) throw ConfigError("loss: lambda must be finite");
  }
  // C = w - w ln(1 + w/eps); recomputed so it can never go stale.
  double wing_c() const {
    return wing_w - wing_w * std::log1p(wing_w / wing_epsilon);
  }
};

struct LossReport {
  double total = 0;
  double cls_term = 0;
  double reg_term = 0;
  int positive_cell_count = 0;
};

inline constexpr double kProbClamp = 1e-7;

// -alpha_t (1 - p_t)^gamma ln(p_t); p is clamped to [delta, 1-delta].
template <typename T>
T focal_loss(T p, int y, T gamma, T alpha) {
  p = std::clamp(p, T(kProbClamp), T(1) - T(kProbClamp));
  const T pt = y == 1 ? p : T(1) - p;
  const T at = y == 1 ? alpha : T(1) - alpha;
  return -at * std::pow(T(1) - pt, gamma) * std::log(pt);
}

// d/dp of focal_loss at clamped p.
template <typename T>
T focal_loss_dp(T p, int y, T gamma, T alpha) {
  p = std::clamp(p, T(kProbClamp), T(1) - T(kProbClamp));
  const T pt = y == 1 ? p : T(1) - p;
  const T at = y == 1 ? alpha : T(1) - alpha;
  const T one_m = T(1) - pt;
  T dpt;
  if (gamma == T(0)) {
    dpt = -at / pt;
  } else {
    dpt = at * gamma * std::pow(one_m, gamma - T(1)) * std::log(pt) -
          at * std::pow(one_m, gamma) / pt;
  }
  return y == 1 ? dpt : -dpt;
}

template <typename T>
T endpoint_error_d(const Eigen::Matrix<T, 4, 1>& e,
                   const Eigen::Matrix<T, 4, 1>& t) {
  const T direct = (t - e).template lpNorm<1>();
  Eigen::Matrix<T, 4, 1> sw;
  sw << e[2], e[3], e[0], e[1];
  const T swapped = (t - sw).template lpNorm<1>();
  return std::min(direct, swapped);
}

template <typename T>
T wing_loss(T d, T w, T eps) {
  if (d < w) return w * std::log1p(d / eps);
  const T c = w - w * std::log1p(w / eps);
  return d - c;
}

namespace detail {

// Regression penalty for one positive cell; optionally returns d(loss)/d(e).
template <typename T>
T reg_cell_loss(const Eigen::Matrix<T, 4, 1>& e,
                const Eigen::Matrix<T, 4, 1>& t, const LossConfig& cfg,
                Eigen::Matrix<T, 4, 1>* de) {
  Eigen::Matrix<T, 4, 1> sw;
  sw << e[2], e[3], e[0], e[1];
  const T s_direct = (t - e).template lpNorm<1>();
  const T s_swapped = (t - sw).template lpNorm<1>();
  const bool direct = s_direct <= s_swapped;
  const Eigen::Matrix<T, 4, 1> u = direct ? e : sw;
  const Eigen::Matrix<T, 4, 1> r = t - u;
  const T d = r.template lpNorm<1>();

  T loss;
  Eigen::Matrix<T, 4, 1> du = Eigen::Matrix<T, 4, 1>::Zero();
  auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
  switch (cfg.reg_variant) {
    case LossConfig::Reg::kL2:
      loss = r.squaredNorm();
      if (de) du = T(-2) * r;
      break;
    case LossConfig::Reg::kL1: {
      loss = d;
      if (de) for (int i = 0; i < 4; ++i) du[i] = -sign(r[i]);
      break;
    }
    case LossConfig::Reg::kSmoothL1: {
      const T dd = d < T(1) ? d : T(1);
      loss = d < T(1) ? T(0.5) * d * d : d - T(0.5);
      if (de) for (int i = 0; i < 4; ++i) du[i] = dd * -sign(r[i]);
      break;
    }
    case LossConfig::Reg::kWing:
    default: {
      const T w = T(cfg.wing_w);
      const T eps = T(cfg.wing_epsilon);
      loss = wing_loss(d, w, eps);
      const T dd = d < w ? w / (eps + d) : T(1);
      if (de) for (int i = 0; i < 4; ++i) du[i] = dd * -sign(r[i]);
      break;
    }
  }
  if (de) {
    if (direct) {
      *de = du;
    } else {
      // u = swap(e): route the gradient through the index swap.
      (*de) << du[2], du[3], du[0], du[1];
    }
  }
  return loss;
}

template <typename T>
T cls_cell_loss(T p, int y, const LossConfig& cfg) {
  if (cfg.cls_variant == LossConfig::Cls::kCrossEntropy) {
    return T(2) * focal_loss(p, y, T(0), T(0.5));  // exact standard CE
  }
  return focal_loss(p, y, T(cfg.gamma), T(cfg.alpha));
}

template <typename T>
T cls_cell_loss_dp(T p, int y, const LossConfig& cfg) {
  if (cfg.cls_variant == LossConfig::Cls::kCrossEntropy) {
    return T(2) * focal_loss_dp(p, y, T(0), T(0.5));
  }
  return focal_loss_dp(p, y, T(cfg.gamma), T(cfg.alpha));
}

}  // namespace detail

// Spec-shaped entry point: class probabilities and labels as lattice
// matrices, regression tensors as (cells x 4) with cell = row * cols + col.
template <typename T>
LossReport multitask_loss(const Arr<T>& class_probs,
                          const Eigen::MatrixXi& labels, const Mat<T>& reg_pred,
                          const Mat<T>& reg_target, const LossConfig& cfg) {
  cfg.validate();
  if (class_probs.rows() != labels.rows() ||
      class_probs.cols() != labels.cols()) {
    throw ContractError("loss: probability and label shapes differ");
  }
  const Eigen::Index n = labels.size();
  if (reg_pred.rows() != n || reg_target.rows() != n || reg_pred.cols() != 4 ||
      reg_target.cols() != 4) {
    throw ContractError("loss: regression tensor shapes do not match lattice");
  }
  double cls_sum = 0;
  double reg_sum = 0;
  int positives = 0;
  const int rows = int(labels.rows()), cols = int(labels.cols());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int y = labels(r, c);
      cls_sum += double(detail::cls_cell_loss(class_probs(r, c), y, cfg));
      if (y == 1) {
        const Eigen::Index idx = Eigen::Index(r) * cols + c;
        const Eigen::Matrix<T, 4, 1> e = reg_pred.row(idx).transpose();
        const Eigen::Matrix<T, 4, 1> t = reg_target.row(idx).transpose();
        reg_sum += double(detail::reg_cell_loss<T>(e, t, cfg, nullptr));
        ++positives;
      }
    }
  }
  LossReport rep;
  rep.cls_term = cls_sum / double(n);
  rep.reg_term = positives > 0 ? reg_sum / positives : 0.0;
  rep.total = rep.cls_term + cfg.lambda * rep.reg_term;
  rep.positive_cell_count = positives;
  return rep;
}

// Fused training path on raw head outputs in FeatureMap layout: logits 2 x N,
// regression 4 x N, labels flat over cells. Black-box equal to softmax +
// multitask_loss; optionally emits analytic gradients with the mean
// reductions and lambda folded in.
template <typename T>
LossReport multitask_loss_logits(const Mat<T>& logits,
                                 const Eigen::VectorXi& labels,
                                 const Mat<T>& reg_pred,
                                 const Mat<T>& reg_target,
                                 const LossConfig& cfg, Mat<T>* dlogits,
                                 Mat<T>* dreg) {
  cfg.validate();
  const Eigen::Index n = labels.size();
  if (logits.rows() != 2 || logits.cols() != n || reg_pred.rows() != 4 ||
      reg_pred.cols() != n || reg_target.rows() != 4 || reg_target.cols() != n) {
    throw ContractError("loss: fused tensor shapes disagree");
  }
  if (dlogits) dlogits->setZero(2, n);
  if (dreg) dreg->setZero(4, n);

  int positives = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] == 1) ++positives;
  }
  double cls_sum = 0;
  double reg_sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    const T a = logits(0, i);
    const T b = logits(1, i);
    const T m = std::max(a, b);
    const T ea = std::exp(a - m);
    const T eb = std::exp(b - m);
    const T p = eb / (ea + eb);
    cls_sum += double(detail::cls_cell_loss(p, y, cfg));
    if (dlogits) {
      const T dp = detail::cls_cell_loss_dp(p, y, cfg) / T(n);
      const T dl1 = dp * p * (T(1) - p);
      (*dlogits)(1, i) = dl1;
      (*dlogits)(0, i) = -dl1;
    }
    if (y == 1) {
      const Eigen::Matrix<T, 4, 1> e = reg_pred.col(i);
      const Eigen::Matrix<T, 4, 1> t = reg_target.col(i);
      Eigen::Matrix<T, 4, 1> de;
      reg_sum += double(detail::reg_cell_loss<T>(e, t, cfg, dreg ? &de : nullptr));
      if (dreg) {
        dreg->col(i) = de * T(cfg.lambda / positives);
      }
    }
  }
  LossReport rep;
  rep.cls_term = cls_sum / double(n);
  rep.reg_term = positives > 0 ? reg_sum / positives : 0.0;
  rep.total = rep.cls_term + cfg.lambda * rep.reg_term;
  rep.positive_cell_count = positives;
  return rep;
}

}  // namespace lsnet
