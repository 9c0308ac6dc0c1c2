#pragma once

// Dense NN primitives on Eigen, templated on the scalar type: float for
// training throughput, double for finite-difference verification.
//
// A feature map holds one sample as a (channels x height*width) matrix with
// pixel index y * width + x. Convolution filters are stored as
// (out_channels x kh*kw*in_channels) with kernel position major and input
// channel fastest: column index = (ky*kw + kx)*in_channels + c. This layout
// lets im2col fill each patch column with contiguous channel slices.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "lsnet/errors.hpp"

namespace lsnet {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat<T> data;  // channels x (height*width)

  static FeatureMap zeros(int c, int h, int w) {
    FeatureMap m;
    m.channels = c;
    m.height = h;
    m.width = w;
    m.data = Mat<T>::Zero(c, h * w);
    return m;
  }
  int pixels() const { return height * width; }
};

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void im2col(const FeatureMap<T>& x, int k, int stride, int pad, Mat<T>& col) {
  const int oh = conv_out_extent(x.height, k, stride, pad);
  const int ow = conv_out_extent(x.width, k, stride, pad);
  col.resize(k * k * x.channels, oh * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int p = oy * ow + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          const int base = (ky * k + kx) * x.channels;
          if (iy < 0 || iy >= x.height || ix < 0 || ix >= x.width) {
            col.block(base, p, x.channels, 1).setZero();
          } else {
            col.block(base, p, x.channels, 1) = x.data.col(iy * x.width + ix);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& col, int k, int stride, int pad, FeatureMap<T>& dx) {
  const int oh = conv_out_extent(dx.height, k, stride, pad);
  const int ow = conv_out_extent(dx.width, k, stride, pad);
  dx.data.setZero();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int p = oy * ow + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= dx.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= dx.width) continue;
          const int base = (ky * k + kx) * dx.channels;
          dx.data.col(iy * dx.width + ix) += col.block(base, p, dx.channels, 1);
        }
      }
    }
  }
}

template <typename T>
FeatureMap<T> conv_forward(const FeatureMap<T>& x, const Mat<T>& filter,
                           const Mat<T>& bias, int k, int stride, int pad,
                           Mat<T>* col_out = nullptr) {
  if (filter.cols() != k * k * x.channels) {
    throw ContractError("nn: filter shape does not match input channels");
  }
  FeatureMap<T> y;
  y.channels = int(filter.rows());
  y.height = conv_out_extent(x.height, k, stride, pad);
  y.width = conv_out_extent(x.width, k, stride, pad);
  Mat<T> local;
  Mat<T>& col = col_out ? *col_out : local;
  im2col(x, k, stride, pad, col);
  y.data.noalias() = filter * col;
  y.data.colwise() += bias.col(0);
  return y;
}

// Accumulates dfilter/dbias; returns the input gradient.
template <typename T>
FeatureMap<T> conv_backward(const FeatureMap<T>& x, const Mat<T>& filter,
                            int k, int stride, int pad, const FeatureMap<T>& dy,
                            Mat<T>& dfilter, Mat<T>& dbias) {
  Mat<T> col;
  im2col(x, k, stride, pad, col);
  dfilter.noalias() += dy.data * col.transpose();
  dbias.col(0).noalias() += dy.data.rowwise().sum();
  Mat<T> dcol;
  dcol.noalias() = filter.transpose() * dy.data;
  FeatureMap<T> dx = FeatureMap<T>::zeros(x.channels, x.height, x.width);
  col2im(dcol, k, stride, pad, dx);
  return dx;
}

// Per-sample group normalization: channels are split into `groups` equal
// groups and normalized over (group channels x pixels).
template <typename T>
struct GroupNormStats {
  Vec<T> mean;     // per group
  Vec<T> inv_std;  // per group
};

template <typename T>
FeatureMap<T> group_norm_forward(const FeatureMap<T>& x, int groups,
                                 const Mat<T>& gamma, const Mat<T>& beta,
                                 GroupNormStats<T>& stats, T eps = T(1e-5)) {
  if (x.channels % groups != 0) {
    throw ContractError("nn: group count does not divide channels");
  }
  const int cs = x.channels / groups;
  FeatureMap<T> y = x;
  stats.mean.resize(groups);
  stats.inv_std.resize(groups);
  for (int g = 0; g < groups; ++g) {
    auto block = y.data.middleRows(g * cs, cs);
    const T mu = block.mean();
    const T var = (block.array() - mu).square().mean();
    const T inv = T(1) / std::sqrt(var + eps);
    stats.mean[g] = mu;
    stats.inv_std[g] = inv;
    block = ((block.array() - mu) * inv).matrix();
  }
  for (int c = 0; c < x.channels; ++c) {
    y.data.row(c) = gamma(c, 0) * y.data.row(c).array() + beta(c, 0);
  }
  return y;
}

template <typename T>
FeatureMap<T> group_norm_backward(const FeatureMap<T>& x, int groups,
                                  const Mat<T>& gamma,
                                  const GroupNormStats<T>& stats,
                                  const FeatureMap<T>& dy, Mat<T>& dgamma,
                                  Mat<T>& dbeta) {
  const int cs = x.channels / groups;
  FeatureMap<T> dx = FeatureMap<T>::zeros(x.channels, x.height, x.width);
  Mat<T> xhat(cs, x.pixels());
  Mat<T> dxh(cs, x.pixels());
  for (int g = 0; g < groups; ++g) {
    const T mu = stats.mean[g];
    const T inv = stats.inv_std[g];
    xhat = ((x.data.middleRows(g * cs, cs).array() - mu) * inv).matrix();
    for (int j = 0; j < cs; ++j) {
      const int c = g * cs + j;
      dgamma(c, 0) += dy.data.row(c).cwiseProduct(xhat.row(j)).sum();
      dbeta(c, 0) += dy.data.row(c).sum();
      dxh.row(j) = gamma(c, 0) * dy.data.row(c);
    }
    const T m = T(cs) * T(x.pixels());
    const T sum_dxh = dxh.sum();
    const T sum_dxh_xhat = dxh.cwiseProduct(xhat).sum();
    dx.data.middleRows(g * cs, cs) =
        (inv * (dxh.array() - sum_dxh / m - xhat.array() * (sum_dxh_xhat / m)))
            .matrix();
  }
  return dx;
}

template <typename T>
FeatureMap<T> relu(const FeatureMap<T>& x) {
  FeatureMap<T> y = x;
  y.data = y.data.cwiseMax(T(0));
  return y;
}

template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& act, const FeatureMap<T>& dy) {
  FeatureMap<T> dx = dy;
  dx.data = (act.data.array() > T(0)).select(dy.data, Mat<T>::Zero(dy.data.rows(), dy.data.cols()));
  return dx;
}

using PoolIndex = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// 2x2 max pooling with stride 2; records argmax input pixels for backward.
template <typename T>
FeatureMap<T> maxpool2x2_forward(const FeatureMap<T>& x, PoolIndex& index) {
  if (x.height % 2 != 0 || x.width % 2 != 0) {
    throw ContractError("nn: maxpool2x2 requires even spatial extents");
  }
  const int oh = x.height / 2;
  const int ow = x.width / 2;
  FeatureMap<T> y = FeatureMap<T>::zeros(x.channels, oh, ow);
  index.resize(x.channels, oh * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int p = oy * ow + ox;
      const int p00 = (2 * oy) * x.width + 2 * ox;
      const int cand[4] = {p00, p00 + 1, p00 + x.width, p00 + x.width + 1};
      for (int c = 0; c < x.channels; ++c) {
        int best = cand[0];
        T val = x.data(c, cand[0]);
        for (int i = 1; i < 4; ++i) {
          const T v = x.data(c, cand[i]);
          if (v > val) {
            val = v;
            best = cand[i];
          }
        }
        y.data(c, p) = val;
        index(c, p) = best;
      }
    }
  }
  return y;
}

template <typename T>
FeatureMap<T> maxpool2x2_backward(const FeatureMap<T>& x, const PoolIndex& index,
                                  const FeatureMap<T>& dy) {
  FeatureMap<T> dx = FeatureMap<T>::zeros(x.channels, x.height, x.width);
  for (int p = 0; p < dy.pixels(); ++p) {
    for (int c = 0; c < x.channels; ++c) {
      dx.data(c, index(c, p)) += dy.data(c, p);
    }
  }
  return dx;
}

// Softmax over the two channels of a classifier map; returns the probability
// of the "cell with line segments" channel (index 1).
template <typename T>
Arr<T> softmax_positive_prob(const FeatureMap<T>& logits) {
  if (logits.channels != 2) {
    throw ContractError("nn: classifier map must have 2 channels");
  }
  Arr<T> p(1, logits.pixels());
  for (int i = 0; i < logits.pixels(); ++i) {
    const T a = logits.data(0, i);
    const T b = logits.data(1, i);
    const T m = std::max(a, b);
    const T ea = std::exp(a - m);
    const T eb = std::exp(b - m);
    p(0, i) = eb / (ea + eb);
  }
  return p;
}

}  // namespace lsnet
