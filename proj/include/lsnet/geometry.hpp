#pragma once

// Image-frame geometry.
//
// Continuous pixel coordinates: origin at the top-left corner of the image,
// x grows rightward (columns), y grows downward (rows). Pixel (row, col)
// covers the unit square [col, col+1] x [row, row+1]; its center sits at
// (col + 0.5, row + 0.5). An S x S image spans [0, S] x [0, S].

#include <cmath>
#include <optional>

namespace lsnet {

struct LineSegment {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  // Detection confidence in [0, 1]; absent on ground truth.
  std::optional<double> confidence;

  double length() const { return std::hypot(x2 - x1, y2 - y1); }
  LineSegment swapped() const {
    LineSegment s{x2, y2, x1, y1};
    s.confidence = confidence;
    return s;
  }
  bool finite() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2);
  }
};

// A segment and its endpoint-swapped twin denote the same geometric object;
// this is the order-free endpoint distance (max over the best pairing).
double endpoint_distance_orderfree(const LineSegment& a, const LineSegment& b);

struct Box {
  double x0 = 0, y0 = 0, width = 0, height = 0;

  double x1() const { return x0 + width; }
  double y1() const { return y0 + height; }
  // Closed-box membership.
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1() && y >= y0 && y <= y1();
  }
};

// Parametric (Liang-Barsky) clipping against the closed box. Returns the
// sub-segment inside the box with the input's endpoint order preserved, or
// nothing when the intersection is empty or a single point. Output endpoints
// are clamped into the box, so membership holds exactly.
std::optional<LineSegment> clip_segment_to_box(const LineSegment& seg,
                                               const Box& box);

}  // namespace lsnet
