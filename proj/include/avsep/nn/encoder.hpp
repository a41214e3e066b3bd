#ifndef AVSEP_NN_ENCODER_HPP
#define AVSEP_NN_ENCODER_HPP

#include "avsep/nn/layers.hpp"

#include <array>
#include <random>
#include <vector>

namespace avsep::nn {

struct EncoderConfig {
  int input_size = 224;
  std::array<int, 4> channels{16, 32, 64, 64};
  int feature_dim = 32;
  bool bias = true;
  bool operator==(const EncoderConfig&) const = default;
};

/// Four stride-2 3x3 conv blocks, global average pool, linear projection to
/// feature_dim. Input n x 3 x S x S, output feature_dim x n.
template <typename Scalar>
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
    if (config.feature_dim < 1) throw InvalidInput("encoder: feature_dim must be >= 1");
    int in = 3;
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
      blocks_.emplace_back("encoder.conv" + std::to_string(i), in, config.channels[i], 3, 2, 1,
                           config.bias, rng);
      acts_.emplace_back(Scalar(0));
      in = config.channels[i];
    }
    head_ = Linear<Scalar>("encoder.fc", in, config.feature_dim, config.bias, rng);
  }

  Matrix<Scalar> forward(const Tensor<Scalar>& crops) {
    if (crops.c != 3 || crops.h != config_.input_size || crops.w != config_.input_size)
      throw InvalidInput("encoder: crops must be n x 3 x " + std::to_string(config_.input_size) +
                         " x " + std::to_string(config_.input_size));
    Tensor<Scalar> x = crops;
    for (std::size_t i = 0; i < blocks_.size(); ++i) x = acts_[i].forward(blocks_[i].forward(x));
    pooled_h_ = x.h;
    pooled_w_ = x.w;
    return head_.forward(global_average_pool(x));
  }

  /// Accumulates parameter gradients; the crop gradient is discarded.
  void backward(const Matrix<Scalar>& grad_features) {
    Tensor<Scalar> g =
        global_average_pool_backward<Scalar>(head_.backward(grad_features), pooled_h_, pooled_w_);
    for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(acts_[i].backward(g));
  }

  void collect(ParameterList<Scalar>& out) {
    for (auto& b : blocks_) b.collect(out);
    head_.collect(out);
  }

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  std::vector<Conv2d<Scalar>> blocks_;
  std::vector<LeakyRelu<Scalar>> acts_;
  Linear<Scalar> head_;
  int pooled_h_ = 0, pooled_w_ = 0;
};

}  // namespace avsep::nn

#endif  // AVSEP_NN_ENCODER_HPP
