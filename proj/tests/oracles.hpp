#pragma once

// Independent test oracles. These deliberately use different algorithms and
// arithmetic routes than the implementations they check.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "lsnet/geometry.hpp"
#include "lsnet/postprocess.hpp"

namespace oracles {

// Midpoint line oracle: walk the driving axis in floating point and round
// the slave coordinate to the nearest pixel center, ties toward the slave
// direction of travel. Canonical (lexicographic) endpoint order mirrors the
// production rule so reversal symmetry is shared, not assumed.
inline std::vector<lsnet::PixelCoord> midpoint_line(lsnet::PixelCoord p0,
                                                    lsnet::PixelCoord p1) {
  const bool swap = (p1.x < p0.x) || (p1.x == p0.x && p1.y < p0.y);
  if (swap) std::swap(p0, p1);
  const double dx = p1.x - p0.x;
  const double dy = p1.y - p0.y;
  std::vector<lsnet::PixelCoord> out;
  auto round_dir = [](double v, double dir) {
    const double fl = std::floor(v);
    const double frac = v - fl;
    if (std::abs(frac - 0.5) < 1e-9) return int(dir > 0 ? fl + 1 : fl);
    return int(std::lround(v));
  };
  if (std::abs(dx) >= std::abs(dy)) {
    const int n = int(std::abs(dx));
    for (int i = 0; i <= n; ++i) {
      const double t = n == 0 ? 0.0 : double(i) / n;
      out.push_back({p0.x + i, round_dir(p0.y + t * dy, dy)});
    }
  } else {
    const int n = int(std::abs(dy));
    const int sy = dy > 0 ? 1 : -1;
    for (int i = 0; i <= n; ++i) {
      const double t = double(i) / n;
      out.push_back({round_dir(p0.x + t * dx, dx), p0.y + sy * i});
    }
  }
  if (swap) std::reverse(out.begin(), out.end());
  return out;
}

// Exhaustive 256-threshold Otsu scan, recomputing class statistics from
// scratch for every candidate threshold.
inline int otsu_exhaustive_bin(const Eigen::ArrayXXd& values) {
  long long hist[256] = {0};
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const int b = std::clamp(int(std::floor(values(i) * 256.0)), 0, 255);
    ++hist[b];
  }
  int best_k = -1;
  long double best = -1.0L;
  for (int k = 0; k < 255; ++k) {
    long long n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b = 0; b <= k; ++b) {
      n0 += hist[b];
      s0 += (long long)b * hist[b];
    }
    for (int b = k + 1; b < 256; ++b) {
      n1 += hist[b];
      s1 += (long long)b * hist[b];
    }
    if (n0 == 0 || n1 == 0) continue;
    const long double m0 = (long double)s0 / n0;
    const long double m1 = (long double)s1 / n1;
    const long double score = (long double)n0 * n1 * (m0 - m1) * (m0 - m1);
    if (score > best) {
      best = score;
      best_k = k;
    }
  }
  return best_k;
}

// Dense-sampling membership: every point along the clipped segment must lie
// inside the closed box, and clipped pieces must lie on the original line.
inline bool clipped_inside_box(const lsnet::LineSegment& clipped,
                               const lsnet::Box& box, int samples = 257) {
  for (int i = 0; i <= samples; ++i) {
    const double t = double(i) / samples;
    const double x = clipped.x1 + t * (clipped.x2 - clipped.x1);
    const double y = clipped.y1 + t * (clipped.y2 - clipped.y1);
    if (!box.contains(x, y)) return false;
  }
  return true;
}

inline double point_segment_distance(double px, double py,
                                     const lsnet::LineSegment& s) {
  const double dx = s.x2 - s.x1;
  const double dy = s.y2 - s.y1;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x1) * dx + (py - s.y1) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (s.x1 + t * dx), py - (s.y1 + t * dy));
}

// Central finite difference of a scalar function.
template <typename F>
double central_difference(F&& f, double& x, double h = 1e-4) {
  const double orig = x;
  x = orig + h;
  const double fp = f();
  x = orig - h;
  const double fm = f();
  x = orig;
  return (fp - fm) / (2 * h);
}

}  // namespace oracles
