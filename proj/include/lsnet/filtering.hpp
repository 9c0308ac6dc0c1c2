#pragma once

#include <Eigen/Dense>

namespace lsnet {

// Discretized, sum-normalized 1D Gaussian; kernel_size must be odd. The 2D
// blur below is the separable product, i.e. the sampled 2D Gaussian
// exp(-(x^2 + y^2) / (2 sigma^2)) normalized over the kernel support.
Eigen::VectorXd gaussian_kernel_1d(double sigma, int kernel_size);

// Separable convolution with reflected borders.
Eigen::ArrayXXd gaussian_blur_plane(const Eigen::ArrayXXd& plane, double sigma,
                                    int kernel_size);

}  // namespace lsnet
