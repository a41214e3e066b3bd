#ifndef AVSEP_SEPARATOR_HPP
#define AVSEP_SEPARATOR_HPP

#include "avsep/nn/unet.hpp"
#include "avsep/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <tuple>
#include <utility>

namespace avsep {

enum class MaskHead { Sigmoid, Softmax };

MaskHead parse_mask_head(const std::string& name);
std::string to_string(MaskHead head);

struct SeparatorConfig {
  MaskHead head = MaskHead::Softmax;
  nn::UNetConfig unet;
  bool operator==(const SeparatorConfig&) const = default;
};

inline constexpr double kMaskClampEpsilon = 1e-7;

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// 1 / (1 + exp(-u)), evaluated without overflow for large |u|.
template <typename Derived>
Grid<typename Derived::Scalar> sigmoid_head(const Eigen::ArrayBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  return u.unaryExpr([](Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  });
}

/// Two-way softmax across sources, with max-subtraction.
template <typename Derived1, typename Derived2>
std::pair<Grid<typename Derived1::Scalar>, Grid<typename Derived1::Scalar>> softmax_head(
    const Eigen::ArrayBase<Derived1>& u1, const Eigen::ArrayBase<Derived2>& u2) {
  using Scalar = typename Derived1::Scalar;
  if (u1.rows() != u2.rows() || u1.cols() != u2.cols())
    throw InvalidInput("softmax_head: logit shapes differ");
  const Grid<Scalar> m = u1.max(u2);
  const Grid<Scalar> e1 = (u1 - m).exp();
  const Grid<Scalar> e2 = (u2 - m).exp();
  const Grid<Scalar> z = e1 + e2;
  return {e1 / z, e2 / z};
}

template <typename Scalar>
std::pair<Grid<Scalar>, Grid<Scalar>> apply_head(MaskHead head, const Grid<Scalar>& u1,
                                                 const Grid<Scalar>& u2) {
  if (head == MaskHead::Softmax) return softmax_head(u1, u2);
  return {sigmoid_head(u1), sigmoid_head(u2)};
}

/// Mean binary cross entropy over pixels and both sources, predictions
/// clamped to [eps, 1 - eps].
template <typename Scalar>
Scalar per_pixel_cross_entropy(const Grid<Scalar>& p1, const Grid<Scalar>& p2,
                               const Grid<Scalar>& t1, const Grid<Scalar>& t2,
                               Scalar eps = Scalar(kMaskClampEpsilon)) {
  if (p1.rows() != t1.rows() || p1.cols() != t1.cols() || p2.rows() != t2.rows() ||
      p2.cols() != t2.cols() || p1.rows() != p2.rows() || p1.cols() != p2.cols())
    throw InvalidInput("per_pixel_cross_entropy: shape mismatch");
  auto term = [eps](const Grid<Scalar>& p, const Grid<Scalar>& t) {
    const Grid<Scalar> q = p.max(eps).min(Scalar(1) - eps);
    return -(t * q.log() + (Scalar(1) - t) * (Scalar(1) - q).log()).sum();
  };
  return (term(p1, t1) + term(p2, t2)) / Scalar(2 * p1.size());
}

template <typename Scalar>
struct MaskLoss {
  Scalar loss = Scalar(0);
  Grid<Scalar> mask1, mask2;
  Grid<Scalar> grad_u1, grad_u2;  // d loss / d logits
};

/// Head activation, cross entropy, and its gradient with respect to both
/// logit grids. Clamped cells contribute no gradient.
template <typename Scalar>
MaskLoss<Scalar> mask_loss(MaskHead head, const Grid<Scalar>& u1, const Grid<Scalar>& u2,
                           const Grid<Scalar>& t1, const Grid<Scalar>& t2,
                           Scalar eps = Scalar(kMaskClampEpsilon)) {
  MaskLoss<Scalar> r;
  std::tie(r.mask1, r.mask2) = apply_head(head, u1, u2);
  r.loss = per_pixel_cross_entropy(r.mask1, r.mask2, t1, t2, eps);

  const Scalar scale = Scalar(1) / Scalar(2 * u1.size());
  auto dloss_dp = [&](const Grid<Scalar>& p, const Grid<Scalar>& t) {
    const Grid<Scalar> inside = ((p >= eps) && (p <= Scalar(1) - eps)).template cast<Scalar>();
    const Grid<Scalar> q = p.max(eps).min(Scalar(1) - eps);
    return Grid<Scalar>(inside * (-(t / q) + (Scalar(1) - t) / (Scalar(1) - q)) * scale);
  };
  const Grid<Scalar> g1 = dloss_dp(r.mask1, t1);
  const Grid<Scalar> g2 = dloss_dp(r.mask2, t2);
  if (head == MaskHead::Softmax) {
    const Grid<Scalar> cross = r.mask1 * r.mask2;
    r.grad_u1 = cross * (g1 - g2);
    r.grad_u2 = -r.grad_u1;
  } else {
    r.grad_u1 = g1 * r.mask1 * (Scalar(1) - r.mask1);
    r.grad_u2 = g2 * r.mask2 * (Scalar(1) - r.mask2);
  }
  return r;
}

}  // namespace avsep

#endif  // AVSEP_SEPARATOR_HPP
