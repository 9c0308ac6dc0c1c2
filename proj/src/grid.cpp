#include "lsnet/grid.hpp"

#include <algorithm>
#include <cmath>

#include "lsnet/errors.hpp"

namespace lsnet {

GridSpec build_grid_spec(int image_size, int cell_size) {
  if (cell_size <= 0 || image_size <= 0) {
    throw ConfigError("grid: image_size and cell_size must be positive");
  }
  if (cell_size % 2 != 0) {
    throw ConfigError("grid: cell_size must be even to admit a half-cell "
                      "stride, got " + std::to_string(cell_size));
  }
  if (image_size < cell_size) {
    throw ConfigError("grid: image_size must be at least cell_size");
  }
  if (image_size % cell_size != 0) {
    throw ConfigError("grid: image_size " + std::to_string(image_size) +
                      " is not divisible by cell_size " +
                      std::to_string(cell_size));
  }
  GridSpec spec;
  spec.image_width = image_size;
  spec.image_height = image_size;
  spec.cell_size = cell_size;
  spec.stride = cell_size / 2;
  spec.s_m = image_size / cell_size;
  spec.s_a = spec.s_m - 1;
  spec.lattice_rows = 2 * spec.s_m - 1;
  spec.lattice_cols = spec.lattice_rows;
  return spec;
}

Box cell_box(const GridSpec& spec, const LatticePosition& pos) {
  if (pos.row < 0 || pos.row >= spec.lattice_rows || pos.col < 0 ||
      pos.col >= spec.lattice_cols) {
    throw ContractError("grid: lattice position (" + std::to_string(pos.row) +
                        ", " + std::to_string(pos.col) + ") out of range");
  }
  return Box{double(spec.stride * pos.col), double(spec.stride * pos.row),
             double(spec.cell_size), double(spec.cell_size)};
}

GridSubset GridSubset::from_string(std::string_view letters) {
  GridSubset g{false, false, false, false};
  for (char c : letters) {
    switch (c) {
      case 'M': case 'm': g.main = true; break;
      case 'H': case 'h': g.horizontal = true; break;
      case 'V': case 'v': g.vertical = true; break;
      case 'C': case 'c': g.center = true; break;
      default:
        throw ConfigError(std::string("grid: unknown parity class letter '") +
                          c + "', expected one of MHVC");
    }
  }
  if (!g.any()) throw ConfigError("grid: empty parity class set");
  return g;
}

std::string GridSubset::to_string() const {
  std::string s;
  if (main) s += 'M';
  if (horizontal) s += 'H';
  if (vertical) s += 'V';
  if (center) s += 'C';
  return s;
}

TargetTensor encode_targets(const std::vector<LineSegment>& segments,
                            const GridSpec& spec, double tau_len) {
  if (tau_len < 0) throw ConfigError("grid: tau_len must be >= 0");
  TargetTensor t;
  t.rows = spec.lattice_rows;
  t.cols = spec.lattice_cols;
  t.labels = Eigen::MatrixXi::Constant(t.rows, t.cols, -1);
  t.coords = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(t.rows * t.cols, 4);

  Eigen::MatrixXd best_len = Eigen::MatrixXd::Zero(t.rows, t.cols);

  const double cs = spec.cell_size;
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const LineSegment& seg = segments[si];
    // Lattice cells whose box can intersect the segment's bounding box.
    const double xmin = std::min(seg.x1, seg.x2);
    const double xmax = std::max(seg.x1, seg.x2);
    const double ymin = std::min(seg.y1, seg.y2);
    const double ymax = std::max(seg.y1, seg.y2);
    const int c0 = std::max(0, int(std::ceil((xmin - cs) / spec.stride)));
    const int c1 = std::min(t.cols - 1, int(std::floor(xmax / spec.stride)));
    const int r0 = std::max(0, int(std::ceil((ymin - cs) / spec.stride)));
    const int r1 = std::min(t.rows - 1, int(std::floor(ymax / spec.stride)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Box box = cell_box(spec, {r, c});
        const auto piece = clip_segment_to_box(seg, box);
        if (!piece) continue;
        const double len = piece->length();
        // Strict improvement keeps the earliest segment on ties.
        if (len <= tau_len || len <= best_len(r, c)) continue;
        best_len(r, c) = len;
        t.labels(r, c) = 1;
        const int idx = t.index(r, c);
        t.coords(idx, 0) = (piece->x1 - box.x0) / cs;
        t.coords(idx, 1) = (piece->y1 - box.y0) / cs;
        t.coords(idx, 2) = (piece->x2 - box.x0) / cs;
        t.coords(idx, 3) = (piece->y2 - box.y0) / cs;
      }
    }
  }
  return t;
}

std::vector<LineSegment> decode_predictions(
    const Eigen::MatrixXd& class_probs,
    const Eigen::Matrix<double, Eigen::Dynamic, 4>& coords,
    const GridSpec& spec, double conf_threshold) {
  if (class_probs.rows() != spec.lattice_rows ||
      class_probs.cols() != spec.lattice_cols) {
    throw ContractError("grid: class_probs shape does not match lattice");
  }
  if (coords.rows() != spec.cell_count()) {
    throw ContractError("grid: coords row count does not match lattice");
  }
  std::vector<LineSegment> out;
  const double cs = spec.cell_size;
  for (int r = 0; r < spec.lattice_rows; ++r) {
    for (int c = 0; c < spec.lattice_cols; ++c) {
      const double p = class_probs(r, c);
      if (!(p > conf_threshold)) continue;
      const int idx = r * spec.lattice_cols + c;
      const double x0 = spec.stride * c;
      const double y0 = spec.stride * r;
      LineSegment seg;
      seg.x1 = x0 + cs * std::clamp(coords(idx, 0), 0.0, 1.0);
      seg.y1 = y0 + cs * std::clamp(coords(idx, 1), 0.0, 1.0);
      seg.x2 = x0 + cs * std::clamp(coords(idx, 2), 0.0, 1.0);
      seg.y2 = y0 + cs * std::clamp(coords(idx, 3), 0.0, 1.0);
      seg.confidence = p;
      out.push_back(seg);
    }
  }
  return out;
}

TargetTensor mask_parity_classes(TargetTensor target,
                                 const GridSubset& classes) {
  if (!classes.any()) throw ConfigError("grid: empty parity class set");
  for (int r = 0; r < target.rows; ++r) {
    for (int c = 0; c < target.cols; ++c) {
      if (classes.contains(parity_class({r, c}))) continue;
      target.labels(r, c) = -1;
      target.coords.row(target.index(r, c)).setZero();
    }
  }
  return target;
}

Eigen::MatrixXd mask_parity_classes(Eigen::MatrixXd probs,
                                    const GridSubset& classes) {
  if (!classes.any()) throw ConfigError("grid: empty parity class set");
  for (int r = 0; r < probs.rows(); ++r) {
    for (int c = 0; c < probs.cols(); ++c) {
      if (!classes.contains(parity_class({int(r), int(c)}))) probs(r, c) = 0.0;
    }
  }
  return probs;
}

}  // namespace lsnet
