#ifndef AVSEP_NN_LAYERS_HPP
#define AVSEP_NN_LAYERS_HPP

#include "avsep/nn/tensor.hpp"

#include <random>
#include <string>

namespace avsep::nn {

/// 2-D convolution lowered to one GEMM per batch via im2col. Weight columns
/// are ordered (ky, kx, in_channel) to match the im2col row layout.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
         bool bias, std::mt19937_64& rng)
      : in_(in_channels),
        out_(out_channels),
        k_(kernel),
        stride_(stride),
        pad_(padding),
        has_bias_(bias),
        weight_(name + ".weight", out_channels, Eigen::Index(kernel) * kernel * in_channels),
        bias_(name + ".bias", out_channels, 1) {
    he_init(weight_, kernel * kernel * in_channels, rng);
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    if (x.c != in_) throw InvalidInput("Conv2d: expected " + std::to_string(in_) + " channels");
    in_n_ = x.n;
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = out_size(x.h), ow = out_size(x.w);
    if (oh < 1 || ow < 1) throw InvalidInput("Conv2d: input smaller than kernel");
    im2col(x, oh, ow);
    Tensor<Scalar> y;
    y.n = x.n;
    y.c = out_;
    y.h = oh;
    y.w = ow;
    y.data.noalias() = weight_.value * columns_;
    if (has_bias_) y.data.colwise() += bias_.value.col(0);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    weight_.grad.noalias() += grad_out.data * columns_.transpose();
    if (has_bias_) bias_.grad.col(0) += grad_out.data.rowwise().sum();
    const Matrix<Scalar> dcols = weight_.value.transpose() * grad_out.data;
    Tensor<Scalar> dx(in_n_, in_, in_h_, in_w_);
    col2im(dcols, grad_out.h, grad_out.w, dx);
    return dx;
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  template <typename F>
  void for_each_tap(int n, int h, int w, int oh, int ow, F&& f) const {
    for (int i = 0; i < n; ++i)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index col = (Eigen::Index(i) * oh + oy) * ow + ox;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              f(Eigen::Index(ky * k_ + kx) * in_, col,
                (Eigen::Index(i) * h + iy) * w + ix);
            }
          }
        }
  }

  void im2col(const Tensor<Scalar>& x, int oh, int ow) {
    columns_.setZero(Eigen::Index(k_) * k_ * in_, Eigen::Index(x.n) * oh * ow);
    for_each_tap(x.n, x.h, x.w, oh, ow, [&](Eigen::Index row, Eigen::Index col, Eigen::Index src) {
      columns_.col(col).segment(row, in_) = x.data.col(src);
    });
  }

  void col2im(const Matrix<Scalar>& dcols, int oh, int ow, Tensor<Scalar>& dx) const {
    for_each_tap(dx.n, dx.h, dx.w, oh, ow, [&](Eigen::Index row, Eigen::Index col, Eigen::Index dst) {
      dx.data.col(dst) += dcols.col(col).segment(row, in_);
    });
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  Parameter<Scalar> weight_, bias_;
  Matrix<Scalar> columns_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Fully connected layer on column vectors (features x batch).
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features, bool bias, std::mt19937_64& rng)
      : has_bias_(bias),
        weight_(name + ".weight", out_features, in_features),
        bias_(name + ".bias", out_features, 1) {
    he_init(weight_, in_features, rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    if (x.rows() != weight_.value.cols())
      throw InvalidInput("Linear: expected " + std::to_string(weight_.value.cols()) + " inputs");
    input_ = x;
    Matrix<Scalar> y = weight_.value * x;
    if (has_bias_) y.colwise() += bias_.value.col(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) {
    weight_.grad.noalias() += grad_out * input_.transpose();
    if (has_bias_) bias_.grad.col(0) += grad_out.rowwise().sum();
    return weight_.value.transpose() * grad_out;
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  bool has_bias_ = true;
  Parameter<Scalar> weight_, bias_;
  Matrix<Scalar> input_;
};

/// max(x, slope * x); slope 0 is a plain ReLU.
template <typename Scalar>
class LeakyRelu {
 public:
  explicit LeakyRelu(Scalar slope = Scalar(0)) : slope_(slope) {}

  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& x) {
    positive_ = (x.array() > Scalar(0)).template cast<Scalar>();
    return (x.array() * (positive_.array() + slope_ * (Scalar(1) - positive_.array()))).matrix();
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    Tensor<Scalar> y = x;
    y.data = forward(x.data);
    return y;
  }

  template <typename Derived>
  Matrix<Scalar> backward(const Eigen::MatrixBase<Derived>& g) const {
    return (g.array() * (positive_.array() + slope_ * (Scalar(1) - positive_.array()))).matrix();
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) const {
    Tensor<Scalar> d = g;
    d.data = backward(g.data);
    return d;
  }

 private:
  Scalar slope_;
  Matrix<Scalar> positive_;
};

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
Tensor<Scalar> upsample2x(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n, x.c, 2 * x.h, 2 * x.w);
  for (int i = 0; i < x.n; ++i)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox)
        y.data.col((Eigen::Index(i) * y.h + oy) * y.w + ox) =
            x.data.col((Eigen::Index(i) * x.h + oy / 2) * x.w + ox / 2);
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample2x_backward(const Tensor<Scalar>& g) {
  Tensor<Scalar> d(g.n, g.c, g.h / 2, g.w / 2);
  for (int i = 0; i < g.n; ++i)
    for (int oy = 0; oy < g.h; ++oy)
      for (int ox = 0; ox < g.w; ++ox)
        d.data.col((Eigen::Index(i) * d.h + oy / 2) * d.w + ox / 2) +=
            g.data.col((Eigen::Index(i) * g.h + oy) * g.w + ox);
  return d;
}

/// Mean over pixels: returns channels x n.
template <typename Scalar>
Matrix<Scalar> global_average_pool(const Tensor<Scalar>& x) {
  return sum_spatial(x) / Scalar(x.pixels());
}

template <typename Scalar>
Tensor<Scalar> global_average_pool_backward(const Matrix<Scalar>& g, int h, int w) {
  Tensor<Scalar> d = tile_spatial<Scalar>(g, h, w);
  d.data /= Scalar(Eigen::Index(h) * w);
  return d;
}

}  // namespace avsep::nn

#endif  // AVSEP_NN_LAYERS_HPP
