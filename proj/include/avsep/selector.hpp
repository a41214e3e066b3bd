#ifndef AVSEP_SELECTOR_HPP
#define AVSEP_SELECTOR_HPP

#include "avsep/nn/layers.hpp"
#include "avsep/types.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace avsep {

using nn::Matrix;
using nn::Vector;

/// Objectness-of-sound head: ReLU(FC(ReLU(FC(v)))), shared by both images in
/// training and by all proposals at inference. Features are columns.
template <typename Scalar>
class ScoreHead {
 public:
  ScoreHead() = default;
  ScoreHead(int feature_dim, int hidden, std::mt19937_64& rng)
      : fc1_("selector.fc1", feature_dim, hidden, true, rng),
        fc2_("selector.fc2", hidden, 1, true, rng) {
    // Start the output unit in the active region so early samples are not
    // all-zero.
    fc2_.bias().value.setConstant(Scalar(1));
    fc2_.weight().value *= Scalar(0.1);
  }

  /// features: C x n; returns n scores.
  Vector<Scalar> forward(const Matrix<Scalar>& features) {
    const Matrix<Scalar> out = relu2_.forward(fc2_.forward(relu1_.forward(fc1_.forward(features))));
    return out.row(0).transpose();
  }

  /// grad_scores: n; returns C x n.
  Matrix<Scalar> backward(const Vector<Scalar>& grad_scores) {
    const Matrix<Scalar> g = grad_scores.transpose();
    return fc1_.backward(relu1_.backward(fc2_.backward(relu2_.backward(g))));
  }

  void collect(nn::ParameterList<Scalar>& out) {
    fc1_.collect(out);
    fc2_.collect(out);
  }

  nn::Linear<Scalar>& fc1() { return fc1_; }
  nn::Linear<Scalar>& fc2() { return fc2_; }

 private:
  nn::Linear<Scalar> fc1_, fc2_;
  nn::LeakyRelu<Scalar> relu1_, relu2_;
};

/// Stateless form of the score head for explicit parameters.
template <typename Scalar>
Scalar score_feature(const Vector<Scalar>& v, const Matrix<Scalar>& w1, const Vector<Scalar>& b1,
                     const Matrix<Scalar>& w2, const Vector<Scalar>& b2) {
  if (w1.cols() != v.size() || b1.size() != w1.rows() || w2.cols() != w1.rows() ||
      w2.rows() != 1 || b2.size() != 1)
    throw InvalidInput("score_feature: dimension mismatch");
  const Vector<Scalar> hidden = (w1 * v + b1).cwiseMax(Scalar(0));
  return std::max(Scalar(0), (w2 * hidden + b2)(0));
}

/// P(i, j) = s1_i s2_j / sum_{i,j} s1_i s2_j. Falls back to uniform (with a
/// warning) when every product is zero.
template <typename Scalar>
Matrix<Scalar> pair_probabilities(const Vector<Scalar>& s1, const Vector<Scalar>& s2) {
  if (s1.size() == 0 || s2.size() == 0) throw InvalidInput("pair_probabilities: empty scores");
  if ((s1.array() < Scalar(0)).any() || (s2.array() < Scalar(0)).any())
    throw InvalidInput("pair_probabilities: scores must be nonnegative");
  const Scalar total = s1.sum() * s2.sum();
  if (!(total > Scalar(0))) {
    warn("pair_probabilities: all score products are zero, using uniform pair distribution");
    return Matrix<Scalar>::Constant(s1.size(), s2.size(), Scalar(1) / Scalar(s1.size() * s2.size()));
  }
  return (s1 * s2.transpose()) / total;
}

/// Vector-Jacobian product of pair_probabilities. Zero in the uniform
/// fallback, where P does not depend on the scores.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> pair_probabilities_backward(
    const Vector<Scalar>& s1, const Vector<Scalar>& s2, const Matrix<Scalar>& grad_p) {
  const Scalar sum1 = s1.sum(), sum2 = s2.sum();
  if (!(sum1 * sum2 > Scalar(0)))
    return {Vector<Scalar>::Zero(s1.size()), Vector<Scalar>::Zero(s2.size())};
  const Vector<Scalar> a = s1 / sum1, b = s2 / sum2;
  const Vector<Scalar> ga = grad_p * b;
  const Vector<Scalar> gb = grad_p.transpose() * a;
  return {(ga.array() - a.dot(ga)).matrix() / sum1, (gb.array() - b.dot(gb)).matrix() / sum2};
}

/// Straight-through Gumbel-Softmax draw over the flattened pair grid. The
/// forward value is `hard`; gradients are taken through `soft`.
template <typename Scalar>
struct GumbelSample {
  Matrix<Scalar> hard;
  Matrix<Scalar> soft;
  Matrix<Scalar> noise;
  Scalar temperature = Scalar(1);
  Eigen::Index row = 0, col = 0;
};

template <typename Scalar>
Matrix<Scalar> gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix<Scalar> g(rows, cols);
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    g.data()[k] = Scalar(-std::log(-std::log(u)));
  }
  return g;
}

template <typename Scalar>
GumbelSample<Scalar> st_gumbel_sample_with_noise(const Matrix<Scalar>& p, const Matrix<Scalar>& noise,
                                                 Scalar temperature) {
  if (!(temperature > Scalar(0))) throw InvalidInput("st_gumbel_sample: temperature must be > 0");
  if (p.rows() != noise.rows() || p.cols() != noise.cols())
    throw InvalidInput("st_gumbel_sample: noise shape mismatch");
  if ((p.array() < Scalar(0)).any()) throw InvalidInput("st_gumbel_sample: negative probability");
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();

  GumbelSample<Scalar> s;
  s.noise = noise;
  s.temperature = temperature;
  Matrix<Scalar> logits(p.rows(), p.cols());
  for (Eigen::Index k = 0; k < p.size(); ++k)
    logits.data()[k] = p.data()[k] > Scalar(0)
                           ? (std::log(p.data()[k]) + noise.data()[k]) / temperature
                           : neg_inf;

  // Lowest flattened (row-major) index wins ties.
  Scalar best = neg_inf;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (logits(i, j) > best) {
        best = logits(i, j);
        s.row = i;
        s.col = j;
      }
  if (best == neg_inf) throw InvalidInput("st_gumbel_sample: distribution has no support");

  s.soft = (logits.array() - best).exp().matrix();
  s.soft /= s.soft.sum();
  s.hard = Matrix<Scalar>::Zero(p.rows(), p.cols());
  s.hard(s.row, s.col) = Scalar(1);
  return s;
}

template <typename Scalar>
GumbelSample<Scalar> st_gumbel_sample(const Matrix<Scalar>& p, Scalar temperature,
                                      std::mt19937_64& rng) {
  return st_gumbel_sample_with_noise(p, gumbel_noise<Scalar>(p.rows(), p.cols(), rng), temperature);
}

/// Straight-through backward: treats d loss / d hard as d loss / d soft and
/// returns d loss / d P. Cells with P == 0 get zero gradient.
template <typename Scalar>
Matrix<Scalar> st_gumbel_backward(const GumbelSample<Scalar>& s, const Matrix<Scalar>& p,
                                  const Matrix<Scalar>& grad_hard) {
  const Scalar inner = (s.soft.array() * grad_hard.array()).sum();
  const Matrix<Scalar> grad_logits =
      (s.soft.array() * (grad_hard.array() - inner)).matrix() / s.temperature;
  Matrix<Scalar> grad_p = Matrix<Scalar>::Zero(p.rows(), p.cols());
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p.data()[k] > Scalar(0)) grad_p.data()[k] = grad_logits.data()[k] / p.data()[k];
  return grad_p;
}

/// v1 = sum_i f1_i * sum_j D_ij, v2 = sum_j f2_j * sum_i D_ij. Features are
/// C x N matrices with one feature per column.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> gather_selected_features(const Matrix<Scalar>& f1,
                                                                   const Matrix<Scalar>& f2,
                                                                   const Matrix<Scalar>& d) {
  if (d.rows() != f1.cols() || d.cols() != f2.cols() || f1.rows() != f2.rows())
    throw InvalidInput("gather_selected_features: shape mismatch");
  return {f1 * d.rowwise().sum(), f2 * d.colwise().sum().transpose()};
}

template <typename Scalar>
struct GatherGrads {
  Matrix<Scalar> f1, f2, d;
};

template <typename Scalar>
GatherGrads<Scalar> gather_selected_features_backward(const Matrix<Scalar>& f1,
                                                      const Matrix<Scalar>& f2,
                                                      const Matrix<Scalar>& d,
                                                      const Vector<Scalar>& grad_v1,
                                                      const Vector<Scalar>& grad_v2) {
  GatherGrads<Scalar> g;
  g.f1 = grad_v1 * d.rowwise().sum().transpose();
  g.f2 = grad_v2 * d.colwise().sum();
  const Vector<Scalar> a = f1.transpose() * grad_v1;  // per-row contribution
  const Vector<Scalar> b = f2.transpose() * grad_v2;  // per-column contribution
  g.d = a.replicate(1, d.cols()) + b.transpose().replicate(d.rows(), 1);
  return g;
}

/// Boxes "do not overlap" when their intersection is at most
/// epsilon * min(area_i, area_j); epsilon 0 means strictly disjoint.
inline bool boxes_disjoint(const BoundingBox& a, const BoundingBox& b, double epsilon = 0.0) {
  return static_cast<double>(intersection_area(a, b)) <=
         epsilon * static_cast<double>(std::min(a.area(), b.area()));
}

struct PairSelection {
  int first = 0, second = 1;  // first < second
  bool fallback = false;
  std::vector<std::pair<int, int>> no_set;
};

/// argmax over non-overlapping pairs i < j of s_i * s_j. If no pair is
/// disjoint, picks the lowest-IoU pair among the ten best-scoring boxes
/// and emits a warning.
PairSelection select_pair_inference(const std::vector<double>& scores,
                                    const std::vector<BoundingBox>& boxes,
                                    double overlap_epsilon = 0.0);

}  // namespace avsep

#endif  // AVSEP_SELECTOR_HPP
