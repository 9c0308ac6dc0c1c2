#include "lsnet/geometry.hpp"

#include <algorithm>

namespace lsnet {

double endpoint_distance_orderfree(const LineSegment& a, const LineSegment& b) {
  auto pair_err = [](const LineSegment& u, const LineSegment& v) {
    return std::max(std::hypot(u.x1 - v.x1, u.y1 - v.y1),
                    std::hypot(u.x2 - v.x2, u.y2 - v.y2));
  };
  return std::min(pair_err(a, b), pair_err(a.swapped(), b));
}

std::optional<LineSegment> clip_segment_to_box(const LineSegment& seg,
                                               const Box& box) {
  const double dx = seg.x2 - seg.x1;
  const double dy = seg.y2 - seg.y1;
  if (dx == 0.0 && dy == 0.0) return std::nullopt;  // a point is not a segment

  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {seg.x1 - box.x0, box.x1() - seg.x1, seg.y1 - box.y0,
                       box.y1() - seg.y1};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;  // parallel and outside
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
  }
  if (!(t0 < t1)) return std::nullopt;  // empty or degenerate to a point

  LineSegment out;
  out.x1 = std::clamp(seg.x1 + t0 * dx, box.x0, box.x1());
  out.y1 = std::clamp(seg.y1 + t0 * dy, box.y0, box.y1());
  out.x2 = std::clamp(seg.x1 + t1 * dx, box.x0, box.x1());
  out.y2 = std::clamp(seg.y1 + t1 * dy, box.y0, box.y1());
  out.confidence = seg.confidence;
  if (out.x1 == out.x2 && out.y1 == out.y2) return std::nullopt;
  return out;
}

}  // namespace lsnet
