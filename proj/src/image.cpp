#include "lsnet/image.hpp"

#include <algorithm>
#include <cmath>

namespace lsnet {

ImageRGB ImageRGB::zeros(int height, int width) {
  ImageRGB img;
  for (auto& c : img.ch) c = Eigen::ArrayXXd::Zero(height, width);
  return img;
}

ImageRGB ImageRGB::constant(int height, int width, double r, double g,
                            double b) {
  ImageRGB img;
  img.ch[0] = Eigen::ArrayXXd::Constant(height, width, r);
  img.ch[1] = Eigen::ArrayXXd::Constant(height, width, g);
  img.ch[2] = Eigen::ArrayXXd::Constant(height, width, b);
  return img;
}

void ImageRGB::clamp01() {
  for (auto& c : ch) c = c.min(1.0).max(0.0);
}

Eigen::ArrayXXd luma(const ImageRGB& img) {
  return 0.299 * img.ch[0] + 0.587 * img.ch[1] + 0.114 * img.ch[2];
}

double sample_bilinear(const Eigen::ArrayXXd& plane, double x, double y) {
  const int h = int(plane.rows());
  const int w = int(plane.cols());
  // Pixel centers sit at index + 0.5; convert to index space and clamp.
  double ix = x - 0.5;
  double iy = y - 0.5;
  ix = std::clamp(ix, 0.0, double(w - 1));
  iy = std::clamp(iy, 0.0, double(h - 1));
  const int x0 = std::min(int(std::floor(ix)), w - 1);
  const int y0 = std::min(int(std::floor(iy)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = ix - x0;
  const double fy = iy - y0;
  const double top = plane(y0, x0) * (1 - fx) + plane(y0, x1) * fx;
  const double bot = plane(y1, x0) * (1 - fx) + plane(y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

ImageRGB resize_bilinear(const ImageRGB& img, int out_height, int out_width) {
  ImageRGB out = ImageRGB::zeros(out_height, out_width);
  const double sx = double(img.width()) / out_width;
  const double sy = double(img.height()) / out_height;
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < out_height; ++r) {
      for (int q = 0; q < out_width; ++q) {
        out.ch[c](r, q) =
            sample_bilinear(img.ch[c], (q + 0.5) * sx, (r + 0.5) * sy);
      }
    }
  }
  return out;
}

double max_abs_diff(const ImageRGB& a, const ImageRGB& b) {
  double m = 0.0;
  for (int c = 0; c < 3; ++c) m = std::max(m, (a.ch[c] - b.ch[c]).abs().maxCoeff());
  return m;
}

}  // namespace lsnet
