#include <gtest/gtest.h>

#include <cmath>

#include "drvf/mlp.hpp"
#include "drvf/oracles.hpp"

using namespace drvf;

namespace {

Matrix random_input(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix x(rows, cols);
  for (double& v : x.flat()) v = rng.uniform(-1.5, 1.5);
  return x;
}

// Flattened gradient in ParamList order.
std::vector<double> flatten(const ParamList& list) {
  std::vector<double> out;
  for (const auto& t : list) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

}  // namespace

TEST(Mlp, ZeroWeightsReturnLastBias) {
  Mlp net({3, 4, 2});
  for (auto& layer : net.mutable_layers()) {
    layer.weight.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  net.mutable_layers().back().bias = {0.7, -1.25};
  const Vector y = net.forward(Vector{1.0, -2.0, 3.0});
  EXPECT_DOUBLE_EQ(y[0], 0.7);
  EXPECT_DOUBLE_EQ(y[1], -1.25);
}

TEST(Mlp, IdentityLinearLayer) {
  Mlp net({3, 3}, {Activation::kRelu, Activation::kIdentity, false});
  net.mutable_layers()[0].weight = Matrix::identity(3);
  net.mutable_layers()[0].bias.assign(3, 0.0);
  const Vector x{0.5, -2.0, 4.0};
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesStraightLineEvaluation) {
  Rng rng(11);
  Mlp net({3, 5, 2});
  net.init(rng);
  const Vector x{0.3, -0.8, 1.1};
  const auto& l0 = net.layers()[0];
  const auto& l1 = net.layers()[1];
  Vector h(5);
  for (std::size_t o = 0; o < 5; ++o) {
    double s = l0.bias[o];
    for (std::size_t i = 0; i < 3; ++i) s += x[i] * l0.weight(i, o);
    h[o] = s > 0.0 ? s : 0.0;
  }
  const Vector y = net.forward(x);
  for (std::size_t o = 0; o < 2; ++o) {
    double s = l1.bias[o];
    for (std::size_t i = 0; i < 5; ++i) s += h[i] * l1.weight(i, o);
    EXPECT_NEAR(y[o], s, 1e-14);
  }
}

TEST(Mlp, WrongInputWidthThrows) {
  Mlp net({3, 2});
  EXPECT_THROW(net.forward(Vector{1.0, 2.0}), ShapeError);
}

TEST(Mlp, LinearSquaredLossGradient) {
  // y = Wx, loss = y², dL/dW = 2y xᵀ.
  Mlp net({2, 1}, {Activation::kRelu, Activation::kIdentity, false});
  net.mutable_layers()[0].weight = Matrix(2, 1);
  net.mutable_layers()[0].weight(0, 0) = 0.5;
  net.mutable_layers()[0].weight(1, 0) = -1.5;
  net.mutable_layers()[0].bias = {0.0};
  Matrix x(1, 2);
  x(0, 0) = 2.0;
  x(0, 1) = 1.0;
  MlpCache cache;
  const Matrix y = net.forward(x, cache);
  Matrix g(1, 1, 2.0 * y(0, 0));
  MlpGrads grads = net.make_grads();
  net.backward(cache, g, grads);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(grads.layers[0].weight(0, 0), 2.0 * -0.5 * 2.0);
  EXPECT_DOUBLE_EQ(grads.layers[0].weight(1, 0), 2.0 * -0.5 * 1.0);
}

TEST(Mlp, ZeroOutputGradGivesZeroGradients) {
  Rng rng(3);
  Mlp net({4, 8, 3});
  net.init(rng);
  MlpCache cache;
  const Matrix x = random_input(5, 4, rng);
  net.forward(x, cache);
  MlpGrads grads = net.make_grads();
  const Matrix dx = net.backward(cache, Matrix(5, 3), grads);
  for (double v : flatten(grads.parameters())) EXPECT_EQ(v, 0.0);
  for (double v : dx.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, StaleCacheIsRejected) {
  Rng rng(4);
  Mlp net({2, 3, 1});
  net.init(rng);
  MlpCache cache;
  net.forward(random_input(2, 2, rng), cache);
  net.mutable_layers();
  MlpGrads grads = net.make_grads();
  EXPECT_THROW(net.backward(cache, Matrix(2, 1), grads), UsageError);

  Mlp other({2, 3, 1});
  other.init(rng);
  MlpCache foreign;
  other.forward(random_input(2, 2, rng), foreign);
  EXPECT_THROW(net.backward(foreign, Matrix(2, 1), grads), UsageError);
}

struct GradCase {
  std::vector<std::size_t> widths;
  bool layer_norm;
  std::uint64_t seed;
};

class MlpGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(MlpGradient, MatchesCentralDifferences) {
  const GradCase c = GetParam();
  Rng rng(c.seed);
  Mlp net(c.widths, {Activation::kRelu, Activation::kIdentity, c.layer_norm});
  net.init(rng);
  if (c.layer_norm) {
    for (auto& layer : net.mutable_layers()) {
      for (double& g : layer.ln_gain) g = rng.uniform(0.5, 1.5);
      for (double& s : layer.ln_shift) s = rng.uniform(-0.2, 0.2);
    }
  }
  const Matrix x = random_input(6, c.widths.front(), rng);
  Matrix weights(6, c.widths.back());
  for (double& v : weights.flat()) v = rng.normal();

  auto loss = [&] {
    const Matrix y = net.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights.data()[i] * y.data()[i];
    return s;
  };
  MlpCache cache;
  net.forward(x, cache);
  MlpGrads grads = net.make_grads();
  const Matrix dx = net.backward(cache, weights, grads);
  const auto analytic = flatten(grads.parameters());
  const auto numeric = oracles::finite_difference(loss, net.parameters(), 1e-5);
  EXPECT_LE(oracles::max_relative_error(analytic, numeric), 1e-4);

  // Input gradient by the same oracle on a wrapped copy of x.
  Matrix xv = x;
  ParamList input{{"x", {xv.rows(), xv.cols()}, xv.flat()}};
  auto loss_x = [&] {
    const Matrix y = net.forward(xv);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights.data()[i] * y.data()[i];
    return s;
  };
  const auto numeric_x = oracles::finite_difference(loss_x, input, 1e-5);
  EXPECT_LE(oracles::max_relative_error({dx.data(), dx.data() + dx.size()}, numeric_x), 1e-4);
  EXPECT_EQ(net.input_gradient(cache, weights), dx);
}

INSTANTIATE_TEST_SUITE_P(Nets, MlpGradient,
                         ::testing::Values(GradCase{{3, 8, 2}, false, 1},
                                           GradCase{{5, 16, 16, 4}, false, 2},
                                           GradCase{{4, 32, 32, 1}, false, 3},
                                           GradCase{{3, 12, 7, 2}, true, 4},
                                           GradCase{{6, 32, 32, 3}, true, 5}),
                         [](const auto& info) {
                           std::string name = info.param.layer_norm ? "ln" : "plain";
                           for (auto w : info.param.widths) name += "_" + std::to_string(w);
                           return name;
                         });

TEST(Mlp, RepeatedPassesAreBitIdentical) {
  Rng rng(8);
  Mlp net({3, 16, 16, 2}, {Activation::kRelu, Activation::kIdentity, true});
  net.init(rng);
  const Matrix x = random_input(40, 3, rng);
  MlpCache c1, c2;
  const Matrix y1 = net.forward(x, c1);
  const Matrix y2 = net.forward(x, c2);
  EXPECT_EQ(y1, y2);
  MlpGrads g1 = net.make_grads(), g2 = net.make_grads();
  Matrix dy(40, 2, 0.3);
  EXPECT_EQ(net.backward(c1, dy, g1), net.backward(c2, dy, g2));
  EXPECT_EQ(flatten(g1.parameters()), flatten(g2.parameters()));
}
