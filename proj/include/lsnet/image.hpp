#pragma once

#include <Eigen/Dense>
#include <array>

namespace lsnet {

// Dense RGB image, channel planes indexed (row, col), values in [0, 1].
struct ImageRGB {
  std::array<Eigen::ArrayXXd, 3> ch;

  int height() const { return int(ch[0].rows()); }
  int width() const { return int(ch[0].cols()); }

  static ImageRGB zeros(int height, int width);
  static ImageRGB constant(int height, int width, double r, double g, double b);

  void clamp01();
  bool same_shape(const ImageRGB& other) const {
    return height() == other.height() && width() == other.width();
  }
};

// BT.601 luma.
Eigen::ArrayXXd luma(const ImageRGB& img);

// Bilinear sample of one channel at continuous point (x, y); coordinates are
// clamped to the image so edge pixels replicate outward.
double sample_bilinear(const Eigen::ArrayXXd& plane, double x, double y);

ImageRGB resize_bilinear(const ImageRGB& img, int out_height, int out_width);

double max_abs_diff(const ImageRGB& a, const ImageRGB& b);

}  // namespace lsnet
