#include "lsnet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lsnet/errors.hpp"
#include "lsnet/filtering.hpp"

namespace lsnet {

Eigen::VectorXd gaussian_kernel_1d(double sigma, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("filtering: kernel_size must be odd and positive, got " +
                      std::to_string(kernel_size));
  }
  const int c = kernel_size / 2;
  Eigen::VectorXd k(kernel_size);
  if (sigma <= 0) {
    k.setZero();
    k[c] = 1.0;
    return k;
  }
  for (int i = 0; i < kernel_size; ++i) {
    const double d = i - c;
    k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  k /= k.sum();
  return k;
}

Eigen::ArrayXXd gaussian_blur_plane(const Eigen::ArrayXXd& plane, double sigma,
                                    int kernel_size) {
  const Eigen::VectorXd k = gaussian_kernel_1d(sigma, kernel_size);
  const int h = int(plane.rows());
  const int w = int(plane.cols());
  const int c = kernel_size / 2;
  auto reflect = [](int i, int n) {
    // Half-sample-symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 ...
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  Eigen::ArrayXXd tmp(h, w);
  tmp.setZero();
  for (int r = 0; r < h; ++r) {
    for (int q = 0; q < w; ++q) {
      double acc = 0;
      for (int j = 0; j < kernel_size; ++j) {
        acc += k[j] * plane(r, reflect(q + j - c, w));
      }
      tmp(r, q) = acc;
    }
  }
  Eigen::ArrayXXd out(h, w);
  for (int q = 0; q < w; ++q) {
    for (int r = 0; r < h; ++r) {
      double acc = 0;
      for (int j = 0; j < kernel_size; ++j) {
        acc += k[j] * tmp(reflect(r + j - c, h), q);
      }
      out(r, q) = acc;
    }
  }
  return out;
}

namespace {

inline long long floor_div(long long a, long long b) {
  long long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Driving-axis stepping with exact integer rounding of the slave coordinate;
// ties round toward the slave coordinate's direction of travel.
std::vector<PixelCoord> bres_canonical(PixelCoord a, PixelCoord b) {
  const long long dx = b.x - a.x;  // >= 0 by canonical ordering
  const long long dy = b.y - a.y;
  const long long adx = std::llabs(dx);
  const long long ady = std::llabs(dy);
  std::vector<PixelCoord> out;
  if (adx >= ady) {
    out.reserve(std::size_t(adx) + 1);
    for (long long i = 0; i <= adx; ++i) {
      long long off = 0;
      if (adx != 0) {
        const long long num = dy * i;
        const long long q = floor_div(num, adx);
        const long long r = num - q * adx;  // in [0, adx)
        if (2 * r > adx) off = q + 1;
        else if (2 * r < adx) off = q;
        else off = (dy > 0) ? q + 1 : q;
      }
      out.push_back({int(a.x + i), int(a.y + off)});
    }
  } else {
    const long long sy = dy > 0 ? 1 : -1;
    out.reserve(std::size_t(ady) + 1);
    for (long long i = 0; i <= ady; ++i) {
      const long long num = dx * i;
      const long long q = floor_div(num, ady);
      const long long r = num - q * ady;
      long long off;
      if (2 * r > ady) off = q + 1;
      else if (2 * r < ady) off = q;
      else off = (dx > 0) ? q + 1 : q;  // dx >= 0 in canonical order
      out.push_back({int(a.x + off), int(a.y + sy * i)});
    }
  }
  return out;
}

}  // namespace

std::vector<PixelCoord> bresenham_8(PixelCoord p0, PixelCoord p1) {
  const bool swap = (p1.x < p0.x) || (p1.x == p0.x && p1.y < p0.y);
  if (!swap) return bres_canonical(p0, p1);
  auto out = bres_canonical(p1, p0);
  std::reverse(out.begin(), out.end());
  return out;
}

SegmentationMap rasterize_segments(const std::vector<LineSegment>& segments,
                                   int w_l, int height, int width) {
  if (w_l < 1) throw ConfigError("postprocess: W_l must be a positive integer");
  SegmentationMap map;
  map.kind = SegmentationMap::Kind::kConfidence;
  map.values = Eigen::ArrayXXd::Zero(height, width);

  const int lo = -((w_l - 1) / 2);
  const int hi = w_l - 1 + lo;
  auto to_pixel = [](double v, int n) {
    return std::clamp(int(std::floor(v)), 0, n - 1);
  };
  for (const auto& seg : segments) {
    const double conf = seg.confidence.value_or(1.0);
    const PixelCoord p0{to_pixel(seg.x1, width), to_pixel(seg.y1, height)};
    const PixelCoord p1{to_pixel(seg.x2, width), to_pixel(seg.y2, height)};
    for (const PixelCoord& px : bresenham_8(p0, p1)) {
      for (int oy = lo; oy <= hi; ++oy) {
        const int y = px.y + oy;
        if (y < 0 || y >= height) continue;
        for (int ox = lo; ox <= hi; ++ox) {
          const int x = px.x + ox;
          if (x < 0 || x >= width) continue;
          map.values(y, x) = std::max(map.values(y, x), conf);
        }
      }
    }
  }
  return map;
}

SegmentationMap smooth_map(const SegmentationMap& map, double sigma_s,
                           int kernel_size) {
  SegmentationMap out;
  out.kind = SegmentationMap::Kind::kConfidence;
  out.values = gaussian_blur_plane(map.values, sigma_s, kernel_size);
  return out;
}

OtsuResult otsu_binarize(const SegmentationMap& map) {
  const auto& v = map.values;
  const long long n = v.size();
  if (n == 0) throw ContractError("postprocess: empty map");

  const double vmin = v.minCoeff();
  const double vmax = v.maxCoeff();
  OtsuResult res;
  if (vmin == vmax) {
    // Degenerate constant map: threshold at the value, nothing above it.
    res.threshold = vmin;
    res.map.kind = SegmentationMap::Kind::kBinary;
    res.map.values = Eigen::ArrayXXd::Zero(v.rows(), v.cols());
    return res;
  }

  long long hist[256] = {0};
  for (long long i = 0; i < n; ++i) {
    const double x = v(i);
    const int bin = std::clamp(int(std::floor(x * 256.0)), 0, 255);
    ++hist[bin];
  }
  const long long total = n;
  long long sum_all = 0;
  for (int b = 0; b < 256; ++b) sum_all += (long long)b * hist[b];

  // Between-class variance up to the constant factor 1/N^2:
  // (S0*N - S*n0)^2 / (n0*n1); compared in extended precision.
  int best_k = -1;
  long double best_score = -1.0L;
  long long n0 = 0, s0 = 0;
  for (int k = 0; k < 255; ++k) {
    n0 += hist[k];
    s0 += (long long)k * hist[k];
    const long long n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const long long d = s0 * total - sum_all * n0;
    const long double score =
        (long double)(d) * (long double)(d) / ((long double)n0 * (long double)n1);
    if (score > best_score) {
      best_score = score;
      best_k = k;
    }
  }
  res.threshold = (best_k + 1) / 256.0;
  res.map.kind = SegmentationMap::Kind::kBinary;
  res.map.values = (v > res.threshold).cast<double>();
  return res;
}

SegmentationMap fixed_binarize(const SegmentationMap& map, double t) {
  if (t < 0.0 || t > 1.0) {
    throw ConfigError("postprocess: fixed threshold must lie in [0, 1]");
  }
  SegmentationMap out;
  out.kind = SegmentationMap::Kind::kBinary;
  out.values = (map.values > t).cast<double>();
  return out;
}

}  // namespace lsnet
