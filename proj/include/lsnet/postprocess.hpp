#pragma once

// Segment-to-pixel conversion: 8-connected Bresenham rasterization with
// width W_l, Gaussian smoothing, and Otsu / fixed-threshold binarization.

#include <Eigen/Dense>
#include <vector>

#include "lsnet/geometry.hpp"

namespace lsnet {

struct SegmentationMap {
  enum class Kind { kConfidence, kBinary };
  Kind kind = Kind::kConfidence;
  Eigen::ArrayXXd values;  // (rows, cols); [0,1] confidence or {0,1} binary

  int height() const { return int(values.rows()); }
  int width() const { return int(values.cols()); }
};

struct PixelCoord {
  int x = 0;
  int y = 0;
  bool operator==(const PixelCoord&) const = default;
};

// 8-connected discrete line including both endpoints. The pixel list is
// reversal-symmetric: bresenham_8(a, b) == reverse(bresenham_8(b, a)).
// Off-axis ties round toward the direction of travel.
std::vector<PixelCoord> bresenham_8(PixelCoord p0, PixelCoord p1);

// Continuous endpoints are rounded half-up to pixel centers (index floor(x))
// and the Bresenham set is dilated by a W_l x W_l square element whose anchor
// leans to the top-left for even W_l: offsets span
// [-floor((W_l-1)/2), W_l-1-floor((W_l-1)/2)] on each axis. Each covered pixel
// takes the maximum confidence over covering segments; uncovered pixels are 0.
// Segments without a confidence carry weight 1.
SegmentationMap rasterize_segments(const std::vector<LineSegment>& segments,
                                   int w_l, int height, int width);

// Gaussian smoothing of a confidence map (odd kernel_size, reflected borders).
SegmentationMap smooth_map(const SegmentationMap& map, double sigma_s,
                           int kernel_size);

struct OtsuResult {
  SegmentationMap map;  // binary
  double threshold = 0;
};

// 256-bin Otsu: the threshold maximizes the between-class variance, ties
// broken by the lowest bin; output is 1 where value > threshold. A constant
// map degenerates to threshold = that value and an all-zero output.
OtsuResult otsu_binarize(const SegmentationMap& map);

SegmentationMap fixed_binarize(const SegmentationMap& map, double t);

}  // namespace lsnet
