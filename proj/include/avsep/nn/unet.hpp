#ifndef AVSEP_NN_UNET_HPP
#define AVSEP_NN_UNET_HPP

#include "avsep/nn/layers.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace avsep::nn {

struct UNetConfig {
  int depth = 7;
  int base_channels = 32;
  int feature_dim = 32;
  bool operator==(const UNetConfig&) const = default;

  int channels(int level) const { return base_channels << std::min(level - 1, 3); }
};

/// U-Net over a one-channel spectrogram grid. Down blocks are 4x4 stride-2
/// convs with LeakyReLU(0.2); up blocks are nearest 2x upsampling followed by
/// a 3x3 conv and ReLU, concatenated with the matching skip. The
/// conditioning vector is tiled over the bottleneck and concatenated there.
/// The last block emits raw mask logits.
template <typename Scalar>
class ConditionedUNet {
 public:
  ConditionedUNet() = default;
  ConditionedUNet(const UNetConfig& config, std::mt19937_64& rng) : config_(config) {
    if (config.depth < 1 || config.base_channels < 1 || config.feature_dim < 1)
      throw InvalidInput("unet: depth, base_channels and feature_dim must be positive");
    const int d = config.depth;
    for (int l = 1; l <= d; ++l) {
      const int in = l == 1 ? 1 : config.channels(l - 1);
      down_.emplace_back("unet.down" + std::to_string(l), in, config.channels(l), 4, 2, 1, true,
                         rng);
      down_act_.emplace_back(Scalar(0.2));
    }
    up_.resize(d);
    up_act_.assign(d, LeakyRelu<Scalar>(Scalar(0)));
    for (int l = d; l >= 1; --l) {
      const int in = l == d ? config.channels(d) + config.feature_dim : 2 * config.channels(l);
      const int out = l == 1 ? 1 : config.channels(l - 1);
      up_[l - 1] = Conv2d<Scalar>("unet.up" + std::to_string(l), in, out, 3, 1, 1, true, rng);
    }
    up_[0].weight().value *= Scalar(0.1);
  }

  int multiple() const { return 1 << config_.depth; }

  /// spec: n x 1 x H x W (H, W divisible by 2^depth); features: feature_dim x n.
  Tensor<Scalar> forward(const Tensor<Scalar>& spec, const Matrix<Scalar>& features) {
    if (spec.c != 1) throw InvalidInput("unet: expected a single-channel input");
    if (spec.h % multiple() != 0 || spec.w % multiple() != 0)
      throw InvalidInput("unet: input size must be divisible by 2^depth");
    if (features.rows() != config_.feature_dim || features.cols() != spec.n)
      throw InvalidInput("unet: feature matrix must be feature_dim x batch");
    const int d = config_.depth;
    skips_.assign(d, Tensor<Scalar>());
    Tensor<Scalar> x = spec;
    for (int l = 1; l <= d; ++l) {
      x = down_act_[l - 1].forward(down_[l - 1].forward(x));
      if (l < d) skips_[l - 1] = x;
    }
    x = concat_channels(x, tile_spatial(features, x.h, x.w));
    for (int l = d; l >= 1; --l) {
      if (l < d) x = concat_channels(x, skips_[l - 1]);
      x = up_[l - 1].forward(upsample2x(x));
      if (l > 1) x = up_act_[l - 1].forward(x);
    }
    skips_.clear();
    return x;
  }

  /// Accumulates parameter gradients and returns d loss / d features.
  Matrix<Scalar> backward(const Tensor<Scalar>& grad_logits) {
    const int d = config_.depth;
    std::vector<Tensor<Scalar>> skip_grads(d);
    Tensor<Scalar> g = grad_logits;
    for (int l = 1; l <= d; ++l) {
      if (l > 1) g = up_act_[l - 1].backward(g);
      g = upsample2x_backward(up_[l - 1].backward(g));
      if (l < d) {
        const int own = config_.channels(l);
        Tensor<Scalar> skip(g.n, own, g.h, g.w);
        skip.data = g.data.bottomRows(own);
        skip_grads[l - 1] = std::move(skip);
        Tensor<Scalar> rest(g.n, g.c - own, g.h, g.w);
        rest.data = g.data.topRows(g.c - own);
        g = std::move(rest);
      }
    }
    const int bottleneck = config_.channels(d);
    Tensor<Scalar> cond(g.n, config_.feature_dim, g.h, g.w);
    cond.data = g.data.bottomRows(config_.feature_dim);
    Tensor<Scalar> e(g.n, bottleneck, g.h, g.w);
    e.data = g.data.topRows(bottleneck);

    for (int l = d; l >= 1; --l) {
      if (l < d) e.data += skip_grads[l - 1].data;
      e = down_[l - 1].backward(down_act_[l - 1].backward(e));
    }
    return sum_spatial(cond);
  }

  void collect(ParameterList<Scalar>& out) {
    for (auto& c : down_) c.collect(out);
    for (auto& c : up_) c.collect(out);
  }

  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  std::vector<Conv2d<Scalar>> down_, up_;
  std::vector<LeakyRelu<Scalar>> down_act_, up_act_;
  std::vector<Tensor<Scalar>> skips_;
};

}  // namespace avsep::nn

#endif  // AVSEP_NN_UNET_HPP
