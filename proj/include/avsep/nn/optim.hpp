#ifndef AVSEP_NN_OPTIM_HPP
#define AVSEP_NN_OPTIM_HPP

#include "avsep/nn/tensor.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

namespace avsep::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// they can be checkpointed alongside the weights.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(const ParameterList<Scalar>& params, double lr_scale = 1.0) {
    ++steps_;
    double clip = 1.0;
    if (options_.grad_clip > 0.0) {
      const double norm = std::sqrt(double(squared_grad_norm(params)));
      if (norm > options_.grad_clip) clip = options_.grad_clip / norm;
    }
    const double lr = options_.learning_rate * lr_scale;
    const double c1 = 1.0 - std::pow(options_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, double(steps_));
    for (auto* p : params) {
      auto& [m, v] = moments_[p->name];
      if (m.size() == 0) {
        m = Matrix<Scalar>::Zero(p->value.rows(), p->value.cols());
        v = m;
      }
      Matrix<Scalar> g = p->grad * Scalar(clip);
      if (options_.weight_decay > 0.0) g += Scalar(options_.weight_decay) * p->value;
      m = Scalar(options_.beta1) * m + Scalar(1.0 - options_.beta1) * g;
      v = Scalar(options_.beta2) * v + Scalar(1.0 - options_.beta2) * g.cwiseAbs2();
      p->value.array() -= Scalar(lr / c1) * m.array() /
                          ((v.array() / Scalar(c2)).sqrt() + Scalar(options_.epsilon));
    }
  }

  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  const AdamOptions& options() const { return options_; }

  using Moments = std::pair<Matrix<Scalar>, Matrix<Scalar>>;
  std::unordered_map<std::string, Moments>& moments() { return moments_; }
  const std::unordered_map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamOptions options_;
  long steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace avsep::nn

#endif  // AVSEP_NN_OPTIM_HPP
