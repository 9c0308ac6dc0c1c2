#include <doctest.h>

#include <random>

#include "lsnet/errors.hpp"
#include "lsnet/loss.hpp"

using namespace lsnet;

namespace {

using Vec4 = Eigen::Matrix<double, 4, 1>;

double cross_entropy(double p, int y) {
  p = std::clamp(p, kProbClamp, 1 - kProbClamp);
  const double pt = y == 1 ? p : 1 - p;
  return -std::log(pt);
}

struct LossPoint {
  Mat<double> logits;      // 2 x n
  Eigen::VectorXi labels;  // n
  Mat<double> reg_pred;    // 4 x n
  Mat<double> reg_target;  // 4 x n
};

// Random evaluation point, re-drawn until it avoids the non-differentiable
// bands of the given variant (wing knee, L1 kink at zero, per-coordinate
// kinks, and swap-branch ties).
LossPoint random_point(std::mt19937_64& gen, const LossConfig& cfg, int n) {
  std::normal_distribution<double> nl(0, 2.0);
  std::uniform_real_distribution<double> ur(-3.0, 3.0);
  std::uniform_real_distribution<double> u01(0, 1);
  while (true) {
    LossPoint pt;
    pt.logits.resize(2, n);
    pt.labels.resize(n);
    pt.reg_pred.resize(4, n);
    pt.reg_target.resize(4, n);
    int positives = 0;
    for (int i = 0; i < n; ++i) {
      pt.logits(0, i) = nl(gen);
      pt.logits(1, i) = nl(gen);
      pt.labels[i] = u01(gen) < 0.4 ? 1 : -1;
      if (pt.labels[i] == 1) ++positives;
      for (int k = 0; k < 4; ++k) {
        pt.reg_pred(k, i) = ur(gen);
        pt.reg_target(k, i) = ur(gen);
      }
    }
    if (positives == 0) continue;

    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      if (pt.labels[i] != 1) continue;
      const Vec4 e = pt.reg_pred.col(i);
      const Vec4 t = pt.reg_target.col(i);
      Vec4 sw;
      sw << e[2], e[3], e[0], e[1];
      const double s1 = (t - e).lpNorm<1>();
      const double s2 = (t - sw).lpNorm<1>();
      if (std::abs(s1 - s2) < 1e-3) ok = false;  // branch tie
      const Vec4 r = s1 <= s2 ? Vec4(t - e) : Vec4(t - sw);
      for (int k = 0; k < 4; ++k) {
        if (std::abs(r[k]) < 1e-3) ok = false;  // per-coordinate kink
      }
      const double d = std::min(s1, s2);
      if (d < 1e-2) ok = false;
      if (cfg.reg_variant == LossConfig::Reg::kWing &&
          std::abs(d - cfg.wing_w) < 1e-2) {
        ok = false;  // wing knee
      }
      if (cfg.reg_variant == LossConfig::Reg::kSmoothL1 &&
          std::abs(d - 1.0) < 1e-2) {
        ok = false;
      }
    }
    if (ok) return pt;
  }
}

double total_loss(const LossPoint& pt, const LossConfig& cfg) {
  return multitask_loss_logits<double>(pt.logits, pt.labels, pt.reg_pred,
                                       pt.reg_target, cfg, nullptr, nullptr)
      .total;
}

}  // namespace

TEST_CASE("focal loss values") {
  // Confident correct prediction drives the loss to zero.
  CHECK(focal_loss(1.0 - 1e-9, 1, 2.0, 0.25) < 1e-6);
  CHECK(focal_loss(1e-9, -1, 2.0, 0.25) < 1e-6);
  // gamma 0, alpha 0.5 at p 0.5 is half of ln 2.
  CHECK(focal_loss(0.5, 1, 0.0, 0.5) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-9));
  CHECK(focal_loss(0.5, 1, 0.0, 0.5) == doctest::Approx(0.34657).epsilon(1e-4));
  // Canonical focal point.
  CHECK(focal_loss(0.9, 1, 2.0, 0.25) ==
        doctest::Approx(-0.25 * 0.01 * std::log(0.9)).epsilon(1e-9));
  CHECK(focal_loss(0.9, 1, 2.0, 0.25) ==
        doctest::Approx(2.6341e-4).epsilon(1e-3));
}

TEST_CASE("focal with gamma 0, alpha 0.5 is exactly half cross-entropy") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(gen);
    const int y = (i % 2) ? 1 : -1;
    const double f = focal_loss(p, y, 0.0, 0.5);
    const double ce = cross_entropy(p, y);
    CHECK(std::abs(2 * f - ce) <= 1e-12 * std::max(1.0, ce));
  }
}

TEST_CASE("focal loss is strictly decreasing in p_t") {
  double prev = focal_loss(0.001, 1, 2.0, 0.25);
  for (double p = 0.01; p < 1.0; p += 0.01) {
    const double cur = focal_loss(p, 1, 2.0, 0.25);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("endpoint error d") {
  Vec4 t;
  t << 1, 2, 3, 4;
  CHECK(endpoint_error_d<double>(t, t) == 0.0);
  Vec4 sw;
  sw << 3, 4, 1, 2;
  CHECK(endpoint_error_d<double>(sw, t) == 0.0);
  Vec4 zero = Vec4::Zero();
  Vec4 ones = Vec4::Ones();
  CHECK(endpoint_error_d<double>(zero, ones) == 4.0);
}

TEST_CASE("d is symmetric under swapping either argument") {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 200; ++i) {
    Vec4 e, t;
    for (int k = 0; k < 4; ++k) {
      e[k] = u(gen);
      t[k] = u(gen);
    }
    Vec4 es, ts;
    es << e[2], e[3], e[0], e[1];
    ts << t[2], t[3], t[0], t[1];
    const double d = endpoint_error_d<double>(e, t);
    CHECK(endpoint_error_d<double>(es, t) == doctest::Approx(d).epsilon(1e-12));
    CHECK(endpoint_error_d<double>(e, ts) == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("wing loss values and continuity at the knee") {
  CHECK(wing_loss(0.0, 10.0, 2.0) == 0.0);
  // Both branches agree at d = w to machine precision.
  const double w = 10.0, eps = 2.0;
  const double log_branch = w * std::log1p(w / eps);
  const double c = w - log_branch;
  const double lin_branch = w - c;
  CHECK(std::abs(log_branch - lin_branch) <= 1e-12 * log_branch);
  CHECK(wing_loss(10.0, w, eps) == doctest::Approx(10 * std::log(6.0)).epsilon(1e-12));
  CHECK(wing_loss(10.0, w, eps) == doctest::Approx(17.9176).epsilon(1e-4));
  CHECK(wing_loss(20.0, w, eps) == doctest::Approx(27.9176).epsilon(1e-4));

  // Strictly increasing in d.
  double prev = wing_loss(0.0, w, eps);
  for (double d = 0.25; d < 25; d += 0.25) {
    const double cur = wing_loss(d, w, eps);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("LossConfig validation and wing constant") {
  LossConfig cfg;
  cfg.validate();
  CHECK(cfg.wing_c() ==
        doctest::Approx(10.0 - 10.0 * std::log(6.0)).epsilon(1e-12));
  LossConfig bad = cfg;
  bad.gamma = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.wing_w = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("multitask loss reductions") {
  const int rows = 3, cols = 3;
  Arr<double> probs = Arr<double>::Constant(rows, cols, 0.3);
  Eigen::MatrixXi labels = Eigen::MatrixXi::Constant(rows, cols, -1);
  Mat<double> pred = Mat<double>::Zero(rows * cols, 4);
  Mat<double> target = Mat<double>::Zero(rows * cols, 4);
  LossConfig cfg;

  SUBCASE("all negative labels zero the regression term") {
    pred.setConstant(0.7);  // arbitrary; must not matter
    const LossReport rep = multitask_loss(probs, labels, pred, target, cfg);
    CHECK(rep.reg_term == 0.0);
    CHECK(rep.positive_cell_count == 0);
    CHECK(rep.total == doctest::Approx(rep.cls_term));
  }
  SUBCASE("lambda 0 reduces the total to the classification term") {
    labels(1, 1) = 1;
    pred.row(4).setConstant(0.9);
    cfg.lambda = 0.0;
    const LossReport rep = multitask_loss(probs, labels, pred, target, cfg);
    CHECK(rep.total == doctest::Approx(rep.cls_term));
    CHECK(rep.reg_term > 0.0);
  }
  SUBCASE("a perfect positive cell leaves only the negatives' loss") {
    labels(1, 1) = 1;
    probs(1, 1) = 1.0 - 1e-9;
    target.row(4) << 0.1, 0.2, 0.3, 0.4;
    pred.row(4) = target.row(4);
    const LossReport rep = multitask_loss(probs, labels, pred, target, cfg);
    CHECK(rep.reg_term == 0.0);
    double negatives = 0;
    for (int i = 0; i < rows * cols; ++i) {
      if (i == 4) continue;
      negatives += focal_loss(0.3, -1, cfg.gamma, cfg.alpha);
    }
    CHECK(rep.total == doctest::Approx(negatives / 9).epsilon(1e-6));
  }
  SUBCASE("total equals cls + lambda * reg") {
    labels(0, 2) = 1;
    pred.row(2) << 0.9, 0.9, 0.1, 0.1;
    target.row(2) << 0.2, 0.3, 0.4, 0.5;
    cfg.lambda = 2.5;
    const LossReport rep = multitask_loss(probs, labels, pred, target, cfg);
    CHECK(rep.total ==
          doctest::Approx(rep.cls_term + cfg.lambda * rep.reg_term));
  }
  SUBCASE("shape mismatch rejected") {
    Mat<double> bad = Mat<double>::Zero(rows * cols - 1, 4);
    CHECK_THROWS_AS(multitask_loss(probs, labels, bad, target, cfg),
                    ContractError);
  }
}

TEST_CASE("reg_term is invariant to the target endpoint order") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto variant :
       {LossConfig::Reg::kWing, LossConfig::Reg::kL1, LossConfig::Reg::kL2,
        LossConfig::Reg::kSmoothL1}) {
    LossConfig cfg;
    cfg.reg_variant = variant;
    Arr<double> probs = Arr<double>::Constant(1, 2, 0.6);
    Eigen::MatrixXi labels = Eigen::MatrixXi::Constant(1, 2, 1);
    Mat<double> pred(2, 4), target(2, 4), target_swapped(2, 4);
    for (int i = 0; i < 2; ++i) {
      for (int k = 0; k < 4; ++k) {
        pred(i, k) = u(gen);
        target(i, k) = u(gen);
      }
      target_swapped(i, 0) = target(i, 2);
      target_swapped(i, 1) = target(i, 3);
      target_swapped(i, 2) = target(i, 0);
      target_swapped(i, 3) = target(i, 1);
    }
    const auto a = multitask_loss(probs, labels, pred, target, cfg);
    const auto b = multitask_loss(probs, labels, pred, target_swapped, cfg);
    CHECK(a.reg_term == doctest::Approx(b.reg_term).epsilon(1e-12));
  }
}

TEST_CASE("fused logits path matches softmax + probability path") {
  std::mt19937_64 gen(44);
  LossConfig cfg;
  for (const auto variant :
       {LossConfig::Reg::kWing, LossConfig::Reg::kL2}) {
    cfg.reg_variant = variant;
    const LossPoint pt = random_point(gen, cfg, 9);
    const auto fused = multitask_loss_logits<double>(
        pt.logits, pt.labels, pt.reg_pred, pt.reg_target, cfg, nullptr,
        nullptr);

    Arr<double> probs(3, 3);
    Eigen::MatrixXi labels(3, 3);
    Mat<double> pred(9, 4), target(9, 4);
    for (int i = 0; i < 9; ++i) {
      const double a = pt.logits(0, i), b = pt.logits(1, i);
      probs(i / 3, i % 3) = std::exp(b) / (std::exp(a) + std::exp(b));
      labels(i / 3, i % 3) = pt.labels[i];
      pred.row(i) = pt.reg_pred.col(i).transpose();
      target.row(i) = pt.reg_target.col(i).transpose();
    }
    const auto spec_shaped = multitask_loss(probs, labels, pred, target, cfg);
    CHECK(fused.total == doctest::Approx(spec_shaped.total).epsilon(1e-12));
    CHECK(fused.cls_term == doctest::Approx(spec_shaped.cls_term).epsilon(1e-12));
    CHECK(fused.reg_term == doctest::Approx(spec_shaped.reg_term).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 gen(45);
  const double h = 1e-4;
  int checked = 0;
  for (const auto reg_variant :
       {LossConfig::Reg::kWing, LossConfig::Reg::kL1, LossConfig::Reg::kL2,
        LossConfig::Reg::kSmoothL1}) {
    for (const auto cls_variant :
         {LossConfig::Cls::kFocal, LossConfig::Cls::kCrossEntropy}) {
      LossConfig cfg;
      cfg.reg_variant = reg_variant;
      cfg.cls_variant = cls_variant;
      for (int trial = 0; trial < 5; ++trial) {
        LossPoint pt = random_point(gen, cfg, 9);
        Mat<double> dlogits, dreg;
        multitask_loss_logits<double>(pt.logits, pt.labels, pt.reg_pred,
                                      pt.reg_target, cfg, &dlogits, &dreg);
        auto check_slot = [&](double& slot, double analytic) {
          const double orig = slot;
          slot = orig + h;
          const double fp = total_loss(pt, cfg);
          slot = orig - h;
          const double fm = total_loss(pt, cfg);
          slot = orig;
          const double fd = (fp - fm) / (2 * h);
          const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
          CHECK(std::abs(analytic - fd) / denom < 1e-3);
          ++checked;
        };
        for (int i = 0; i < 9; ++i) {
          check_slot(pt.logits(0, i), dlogits(0, i));
          check_slot(pt.logits(1, i), dlogits(1, i));
          check_slot(pt.reg_pred(0, i), dreg(0, i));
          check_slot(pt.reg_pred(3, i), dreg(3, i));
        }
      }
    }
  }
  CHECK(checked >= 100);
}
