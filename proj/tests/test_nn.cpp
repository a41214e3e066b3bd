#include "avsep/nn/encoder.hpp"
#include "avsep/nn/optim.hpp"
#include "avsep/nn/unet.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace avsep;
using namespace avsep::nn;
using avsep::testing::central_difference;
using avsep::testing::relative_error;

using Md = Matrix<double>;
using Td = Tensor<double>;

namespace {

Td random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Td t(n, c, h, w);
  for (Eigen::Index k = 0; k < t.data.size(); ++k) t.data.data()[k] = g(rng);
  return t;
}

Md random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Md m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
  return m;
}

double dot(const Td& a, const Td& b) { return (a.data.array() * b.data.array()).sum(); }

// Checks every parameter (or a strided subset for large ones) against central
// differences of the scalar loss f.
template <typename F>
void check_parameters(const ParameterList<double>& params, F&& f, double tol, int max_per_param = 60) {
  for (auto* p : params) {
    const Eigen::Index n = p->value.size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / max_per_param);
    Eigen::VectorXd analytic, numeric;
    std::vector<double> a, b;
    for (Eigen::Index k = 0; k < n; k += stride) {
      a.push_back(p->grad.data()[k]);
      b.push_back(central_difference(f, p->value.data()[k]));
    }
    EXPECT_LT(relative_error(Eigen::Map<Eigen::VectorXd>(a.data(), a.size()),
                             Eigen::Map<Eigen::VectorXd>(b.data(), b.size())),
              tol)
        << p->name;
  }
}

}  // namespace

TEST(Conv2d, ForwardMatchesDirectSum) {
  std::mt19937_64 rng(1);
  Conv2d<double> conv("c", 2, 3, 3, 2, 1, true, rng);
  conv.bias().value = random_matrix(3, 1, rng);
  const Td x = random_tensor(2, 2, 7, 6, rng);
  const Td y = conv.forward(x);
  ASSERT_EQ(y.h, 4);
  ASSERT_EQ(y.w, 3);
  for (int i = 0; i < 2; ++i)
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          double s = conv.bias().value(o, 0);
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              for (int c = 0; c < 2; ++c) {
                const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
                if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                s += conv.weight().value(o, (ky * 3 + kx) * 2 + c) * x.at(i, c, iy, ix);
              }
          EXPECT_NEAR(y.at(i, o, oy, ox), s, 1e-12);
        }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {4, 2, 1}, {3, 2, 1}}) {
    Conv2d<double> conv("c", 3, 4, k, stride, pad, true, rng);
    Td x = random_tensor(2, 3, 8, 8, rng);
    const Td probe = random_tensor(2, 4, conv.out_size(8), conv.out_size(8), rng);
    auto f = [&] { return dot(conv.forward(x), probe); };
    f();
    ParameterList<double> params;
    conv.collect(params);
    for (auto* p : params) p->zero_grad();
    const Td dx = conv.backward(probe);
    Md num(dx.data.rows(), dx.data.cols());
    for (Eigen::Index i = 0; i < x.data.size(); ++i) num.data()[i] = central_difference(f, x.data.data()[i]);
    EXPECT_LT(relative_error(dx.data, num), 1e-8);
    check_parameters(params, f, 1e-8, 1000);
  }
}

TEST(Conv2d, RejectsWrongChannels) {
  std::mt19937_64 rng(3);
  Conv2d<double> conv("c", 3, 4, 3, 1, 1, true, rng);
  EXPECT_THROW(conv.forward(Td(1, 2, 5, 5)), InvalidInput);
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Linear<double> fc("fc", 5, 3, true, rng);
  Md x = random_matrix(5, 4, rng);
  const Md probe = random_matrix(3, 4, rng);
  auto f = [&] { return (fc.forward(x).array() * probe.array()).sum(); };
  f();
  ParameterList<double> params;
  fc.collect(params);
  const Md dx = fc.backward(probe);
  Md num(5, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) num.data()[i] = central_difference(f, x.data()[i]);
  EXPECT_LT(relative_error(dx, num), 1e-9);
  check_parameters(params, f, 1e-9);
  EXPECT_THROW(fc.forward(Md::Zero(4, 1)), InvalidInput);
}

TEST(LeakyRelu, SlopeAndGradient) {
  LeakyRelu<double> act(0.2);
  Md x(1, 4);
  x << -2, -0.5, 0.5, 3;
  const Md y = act.forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.4);
  EXPECT_DOUBLE_EQ(y(0, 3), 3.0);
  const Md g = act.backward(Md::Ones(1, 4));
  EXPECT_DOUBLE_EQ(g(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(g(0, 2), 1.0);
}

TEST(Layers, AdjointIdentities) {
  // <A x, y> = <x, A^T y> for the linear resampling operators.
  std::mt19937_64 rng(5);
  const Td x = random_tensor(2, 3, 4, 5, rng);
  const Td y = random_tensor(2, 3, 8, 10, rng);
  EXPECT_NEAR(dot(upsample2x(x), y), dot(x, upsample2x_backward(y)), 1e-10);

  const Md g = random_matrix(3, 2, rng);
  EXPECT_NEAR((global_average_pool(x).array() * g.array()).sum(),
              dot(x, global_average_pool_backward<double>(g, 4, 5)), 1e-10);
  EXPECT_NEAR((sum_spatial(x).array() * g.array()).sum(), dot(x, tile_spatial<double>(g, 4, 5)), 1e-10);

  const Td b = random_tensor(2, 2, 4, 5, rng);
  const Td cat = concat_channels(x, b);
  EXPECT_EQ(cat.c, 5);
  EXPECT_EQ(cat.at(1, 4, 3, 2), b.at(1, 1, 3, 2));
  EXPECT_THROW(concat_channels(x, Td(2, 1, 4, 4)), InvalidInput);
}

TEST(Encoder, ParameterGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  EncoderConfig cfg{16, {3, 4, 4, 5}, 6, true};
  ConvEncoder<double> enc(cfg, rng);
  const Td crops = random_tensor(3, 3, 16, 16, rng);
  const Md probe = random_matrix(6, 3, rng);
  auto f = [&] { return (enc.forward(crops).array() * probe.array()).sum(); };
  EXPECT_EQ(enc.forward(crops).rows(), 6);
  ParameterList<double> params;
  enc.collect(params);
  for (auto* p : params) p->zero_grad();
  f();
  enc.backward(probe);
  check_parameters(params, f, 1e-6);
  EXPECT_THROW(enc.forward(Td(1, 3, 8, 8)), InvalidInput);
}

TEST(UNet, ShapesAndGradients) {
  std::mt19937_64 rng(7);
  UNetConfig cfg{2, 3, 4};
  ConditionedUNet<double> net(cfg, rng);
  Td spec = random_tensor(2, 1, 8, 8, rng);
  Md feats = random_matrix(4, 2, rng);
  const Td probe = random_tensor(2, 1, 8, 8, rng);
  auto f = [&] { return dot(net.forward(spec, feats), probe); };
  const Td out = net.forward(spec, feats);
  EXPECT_TRUE(out.same_shape(spec));

  ParameterList<double> params;
  net.collect(params);
  for (auto* p : params) p->zero_grad();
  f();
  const Md dfeats = net.backward(probe);
  Md num(4, 2);
  for (Eigen::Index i = 0; i < feats.size(); ++i) num.data()[i] = central_difference(f, feats.data()[i]);
  EXPECT_LT(relative_error(dfeats, num), 1e-6);
  EXPECT_GT(dfeats.norm(), 0.0);
  check_parameters(params, f, 1e-6);

  EXPECT_THROW(net.forward(Td(1, 1, 6, 8), feats.leftCols(1)), InvalidInput);
  EXPECT_THROW(net.forward(spec, feats.leftCols(1)), InvalidInput);
  EXPECT_THROW(net.forward(Td(2, 2, 8, 8), feats), InvalidInput);
}

TEST(UNet, ConditioningChangesOutput) {
  std::mt19937_64 rng(8);
  ConditionedUNet<double> net(UNetConfig{3, 4, 5}, rng);
  const Td spec = random_tensor(1, 1, 16, 16, rng);
  const Td a = net.forward(spec, random_matrix(5, 1, rng));
  const Td b = net.forward(spec, random_matrix(5, 1, rng));
  EXPECT_GT((a.data - b.data).norm(), 0.0);
}

TEST(Adam, MatchesHandFormula) {
  Parameter<double> p("w", 2, 1);
  p.value << 1.0, -2.0;
  AdamOptions opt;
  opt.learning_rate = 0.1;
  Adam<double> adam(opt);
  ParameterList<double> params{&p};

  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.5, -1.0}, {0.2, 0.3}, {-0.4, 2.0}};
  for (int t = 1; t <= 3; ++t) {
    p.grad << grads[t - 1][0], grads[t - 1][1];
    adam.step(params);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value(i, 0), w[i], 1e-12);
    }
  }
  EXPECT_EQ(adam.steps(), 3);
  EXPECT_EQ(adam.moments().count("w"), 1u);
}

TEST(Adam, GradientClippingScalesUpdate) {
  Parameter<double> a("a", 1, 1), b("b", 1, 1);
  AdamOptions opt;
  opt.grad_clip = 1.0;
  opt.learning_rate = 1.0;
  Adam<double> adam(opt);
  a.grad(0, 0) = 30;
  b.grad(0, 0) = 40;
  adam.step({&a, &b});
  // The first bias-corrected step is g / |g| regardless of scale.
  EXPECT_NEAR(a.value(0, 0), -1.0, 1e-6);
  EXPECT_NEAR(adam.moments().at("b").first(0, 0), 0.1 * 0.8, 1e-12);
}

TEST(Adam, MinimisesQuadratic) {
  Parameter<double> p("x", 3, 1);
  p.value << 4, -3, 2;
  AdamOptions opt;
  opt.learning_rate = 0.05;
  Adam<double> adam(opt);
  for (int t = 0; t < 2000; ++t) {
    p.grad = 2 * p.value;
    adam.step({&p});
  }
  EXPECT_LT(p.value.norm(), 1e-2);
}
