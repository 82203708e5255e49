#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bnncert/net.hpp"

using namespace bnncert;

namespace {

Network single(std::size_t rows, std::size_t cols) {
  return Network({{rows, cols, true, ActivationKind::identity}});
}

}  // namespace

TEST(Forward, IdentityLayer) {
  const auto net = single(1, 1);
  EXPECT_EQ(forward(net, std::vector<double>{1.0, 0.0}, std::vector<double>{3.0}), std::vector<double>{3.0});
}

TEST(Forward, AffineLayer) {
  const auto net = single(1, 1);
  EXPECT_DOUBLE_EQ(forward(net, std::vector<double>{2.0, 1.0}, std::vector<double>{0.5})[0], 2.0);
}

TEST(Forward, ReluClipsNegativePreactivation) {
  const auto net = Network::mlp({1, 1, 1}, ActivationKind::relu);
  // W0, b0, W1, b1
  EXPECT_DOUBLE_EQ(forward(net, std::vector<double>{1.0, -1.0, 1.0, 0.0}, std::vector<double>{0.5})[0], 0.0);
}

TEST(Forward, CanonicalOrderIsRowMajorThenBias) {
  const auto net = single(2, 2);
  // W = [[1, 2], [3, 4]], b = [10, 20]
  const std::vector<double> w = {1, 2, 3, 4, 10, 20};
  const auto y = forward(net, w, std::vector<double>{1.0, -1.0});
  EXPECT_DOUBLE_EQ(y[0], 1 - 2 + 10);
  EXPECT_DOUBLE_EQ(y[1], 3 - 4 + 20);
  EXPECT_EQ(net.weight_offset(0), 0u);
  EXPECT_EQ(net.bias_offset(0), 4u);
}

TEST(Forward, NoBiasLayer) {
  const Network net({{1, 2, false, ActivationKind::identity}});
  EXPECT_EQ(net.num_params(), 2u);
  EXPECT_DOUBLE_EQ(forward(net, std::vector<double>{2.0, 3.0}, std::vector<double>{1.0, 1.0})[0], 5.0);
}

TEST(Forward, Deterministic) {
  const auto net = Network::mlp({3, 7, 2}, ActivationKind::tanh);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> w(net.num_params());
  for (double& v : w) v = n(rng);
  const std::vector<double> x = {0.1, -0.3, 0.7};
  EXPECT_EQ(forward(net, w, x), forward(net, w, x));
}

TEST(Forward, ShapeErrorsNameTheLayer) {
  const auto net = Network::mlp({2, 3, 1}, ActivationKind::relu);
  try {
    forward(net, std::vector<double>(net.num_params(), 0.0), std::vector<double>{1.0});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
  EXPECT_THROW(forward(net, std::vector<double>(3, 0.0), std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Network, RejectsBrokenArchitectures) {
  EXPECT_THROW(Network(std::vector<LayerSpec>{}), ShapeError);
  try {
    Network({{3, 2, true, ActivationKind::relu}, {1, 4, true, ActivationKind::identity}});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  EXPECT_THROW(Network({{3, 2, true, ActivationKind::identity}, {1, 3, true, ActivationKind::identity}}), ShapeError);
  EXPECT_THROW(Network({{1, 2, true, ActivationKind::relu}}), ShapeError);
}

TEST(Activation, Names) {
  EXPECT_EQ(activation_from_string("relu"), ActivationKind::relu);
  EXPECT_EQ(activation_from_string("tanh"), ActivationKind::tanh);
  EXPECT_EQ(activation_from_string("identity"), ActivationKind::identity);
  EXPECT_THROW(activation_from_string("sigmoid"), DomainError);
}

TEST(Softmax, Examples) {
  auto p = softmax(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  p = softmax(std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
  for (double c : {-500.0, 0.0, 3.0, 800.0}) {
    p = softmax(std::vector<double>{c, c, c});
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, ShiftInvarianceAndNormalisation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> y(5);
    for (double& v : y) v = n(rng);
    const double c = n(rng) * 10;
    auto shifted = y;
    for (double& v : shifted) v += c;
    const auto a = softmax(y), b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GT(a[i], 0.0);
      sum += a[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax(std::vector<double>{0.0, NAN}), NumericError);
  EXPECT_THROW(softmax(std::vector<double>{INFINITY, 0.0}), NumericError);
}

TEST(Backward, WeightGradientMatchesFiniteDifferences) {
  const auto net = Network::mlp({3, 5, 4, 2}, ActivationKind::tanh);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  std::vector<double> w(net.num_params());
  for (double& v : w) v = n(rng);
  const std::vector<double> x = {0.3, -0.2, 0.9};
  const std::vector<double> c = {0.7, -1.3};  // loss = c . y
  const auto trace = forward_trace(net, w, x);
  const auto g = backward(net, w, trace, c, true);
  for (std::size_t p = 0; p < w.size(); ++p) {
    auto wp = w, wm = w;
    const double h = 1e-6;
    wp[p] += h;
    wm[p] -= h;
    const auto yp = forward(net, wp, x), ym = forward(net, wm, x);
    const double fd = (c[0] * (yp[0] - ym[0]) + c[1] * (yp[1] - ym[1])) / (2 * h);
    EXPECT_NEAR(g.weights[p], fd, std::max(1e-5, 1e-3 * std::abs(fd)));
  }
}
