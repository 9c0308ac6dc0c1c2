#pragma once

// Four-overlapping-grid geometry.
//
// An S_m x S_m main grid of cell_size cells plus horizontal (S_m x S_a),
// vertical (S_a x S_m) and center (S_a x S_a) grids, S_a = S_m - 1, are
// realized jointly as one (2*S_m - 1)^2 lattice of cells with stride
// cell_size / 2: the cell at lattice (row, col) has its top-left pixel corner
// at (stride * col, stride * row). Row/col parity selects the owning grid:
//   (even, even) -> main    (even, odd) -> horizontal
//   (odd, even)  -> vertical (odd, odd)  -> center
// Lattice arrays are row-major [row][col]; the flat cell index is
// row * lattice_cols + col. This ordering is part of the module contract.

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "lsnet/geometry.hpp"

namespace lsnet {

enum class ParityClass { kMain, kHorizontal, kVertical, kCenter };

struct GridSpec {
  int image_width = 0;
  int image_height = 0;
  int cell_size = 0;
  int stride = 0;  // cell_size / 2
  int s_m = 0;     // main-grid cells per axis
  int s_a = 0;     // auxiliary-grid cells per axis, s_m - 1
  int lattice_rows = 0;
  int lattice_cols = 0;

  int cell_count() const { return lattice_rows * lattice_cols; }
};

// Square images only; image_size must be a multiple of an even cell_size.
GridSpec build_grid_spec(int image_size, int cell_size);

struct LatticePosition {
  int row = 0;
  int col = 0;
};

inline ParityClass parity_class(const LatticePosition& pos) {
  const bool row_odd = (pos.row % 2) != 0;
  const bool col_odd = (pos.col % 2) != 0;
  if (!row_odd && !col_odd) return ParityClass::kMain;
  if (!row_odd && col_odd) return ParityClass::kHorizontal;
  if (row_odd && !col_odd) return ParityClass::kVertical;
  return ParityClass::kCenter;
}

// Pixel box of a lattice cell; throws ContractError when out of range.
Box cell_box(const GridSpec& spec, const LatticePosition& pos);

// Subset of the four parity classes, e.g. GridSubset::from_string("MHVC").
struct GridSubset {
  bool main = true;
  bool horizontal = true;
  bool vertical = true;
  bool center = true;

  static GridSubset all() { return GridSubset{}; }
  static GridSubset from_string(std::string_view letters);  // of "MHVC"
  std::string to_string() const;

  bool contains(ParityClass c) const {
    switch (c) {
      case ParityClass::kMain: return main;
      case ParityClass::kHorizontal: return horizontal;
      case ParityClass::kVertical: return vertical;
      case ParityClass::kCenter: return center;
    }
    return false;
  }
  bool any() const { return main || horizontal || vertical || center; }
  int count() const {
    return int(main) + int(horizontal) + int(vertical) + int(center);
  }
};

// Per-cell training targets. labels(row, col) is +1 when the cell owns a line
// segment and -1 otherwise; coords row (row * lattice_cols + col) holds the
// cell-normalized endpoints (x1, y1, x2, y2) in [0, 1], zero at negative cells.
struct TargetTensor {
  int rows = 0;
  int cols = 0;
  Eigen::MatrixXi labels;
  Eigen::Matrix<double, Eigen::Dynamic, 4> coords;

  int index(int row, int col) const { return row * cols + col; }
};

// Per cell, clips every segment to the cell box and keeps the longest piece
// with length strictly greater than tau_len; ties go to the lowest input
// index. Coordinates are stored in input endpoint order.
TargetTensor encode_targets(const std::vector<LineSegment>& segments,
                            const GridSpec& spec, double tau_len);

// Cells with probability strictly above conf_threshold emit a segment at
// cell_origin + cell_size * clamp(coords, 0, 1) carrying that probability.
// Cells are scanned row-major; detections from the four parity classes are
// concatenated with no merging or suppression.
std::vector<LineSegment> decode_predictions(
    const Eigen::MatrixXd& class_probs,
    const Eigen::Matrix<double, Eigen::Dynamic, 4>& coords,
    const GridSpec& spec, double conf_threshold);

// Forces labels outside the selected parity classes to -1 (coords zeroed).
TargetTensor mask_parity_classes(TargetTensor target, const GridSubset& classes);
// Forces probabilities outside the selected parity classes to 0.
Eigen::MatrixXd mask_parity_classes(Eigen::MatrixXd probs,
                                    const GridSubset& classes);

}  // namespace lsnet
