#ifndef AVSEP_NN_TENSOR_HPP
#define AVSEP_NN_TENSOR_HPP

#include "avsep/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace avsep::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Batch of feature maps. Storage is one channels x (n * h * w) column-major
/// matrix: column `i * h * w + y * w + x` holds the channel vector of sample
/// i at pixel (y, x), so a whole batch is a single GEMM operand.
template <typename Scalar>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(Matrix<Scalar>::Zero(c_, Eigen::Index(n_) * h_ * w_)) {}

  Eigen::Index pixels() const { return Eigen::Index(h) * w; }
  Scalar& at(int i, int ch, int y, int x) { return data(ch, i * pixels() + Eigen::Index(y) * w + x); }
  Scalar at(int i, int ch, int y, int x) const {
    return data(ch, i * pixels() + Eigen::Index(y) * w + x);
  }
  auto sample(int i) { return data.middleCols(i * pixels(), pixels()); }
  auto sample(int i) const { return data.middleCols(i * pixels(), pixels()); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string name_, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name_)),
        value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

/// He-normal initialisation for a layer with `fan_in` inputs.
template <typename Scalar>
void he_init(Parameter<Scalar>& p, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(fan_in, 1)));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = Scalar(dist(rng));
}

template <typename Scalar>
Scalar squared_grad_norm(const ParameterList<Scalar>& params) {
  Scalar total(0);
  for (const auto* p : params) total += p->grad.squaredNorm();
  return total;
}

/// Concatenate along channels; both tensors must agree on n, h, w.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw InvalidInput("concat_channels: spatial or batch mismatch");
  Tensor<Scalar> out(a.n, a.c + b.c, a.h, a.w);
  out.data.topRows(a.c) = a.data;
  out.data.bottomRows(b.c) = b.data;
  return out;
}

/// Broadcast per-sample vectors (features x n) over an h x w grid.
template <typename Scalar>
Tensor<Scalar> tile_spatial(const Matrix<Scalar>& vectors, int h, int w) {
  const int n = static_cast<int>(vectors.cols());
  Tensor<Scalar> out(n, static_cast<int>(vectors.rows()), h, w);
  for (int i = 0; i < n; ++i) out.sample(i).colwise() = vectors.col(i);
  return out;
}

/// Adjoint of tile_spatial: sum each sample's map over pixels.
template <typename Scalar>
Matrix<Scalar> sum_spatial(const Tensor<Scalar>& t) {
  Matrix<Scalar> out(t.c, t.n);
  for (int i = 0; i < t.n; ++i) out.col(i) = t.sample(i).rowwise().sum();
  return out;
}

}  // namespace avsep::nn

#endif  // AVSEP_NN_TENSOR_HPP
