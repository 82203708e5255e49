#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bnncert/attack.hpp"
#include "random_instances.hpp"

using namespace bnncert;

namespace {

WeightVector random_weights(const Network& net, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  WeightVector w(net.num_params());
  for (double& v : w) v = n(rng);
  return w;
}

}  // namespace

TEST(Pgd, ZeroWidthBoxReturnsCentre) {
  const auto net = Network::mlp({2, 4, 2}, ActivationKind::relu);
  std::mt19937_64 rng(1);
  const auto w = random_weights(net, rng);
  const auto r = pgd(net, w, InputBox::point({0.3, -0.4}), AttackConfig{});
  EXPECT_EQ(r.x, (std::vector<double>{0.3, -0.4}));
}

TEST(Pgd, MonotoneObjectiveReachesBoundary) {
  const Network net({{1, 1, true, ActivationKind::identity}});
  AttackConfig cfg;
  cfg.objective = objective::OutputExtreme{0, false};
  const auto r = pgd(net, WeightVector{3.0, 1.0}, InputBox({-0.5}, {2.0}), cfg);
  EXPECT_DOUBLE_EQ(r.x[0], -0.5);
}

TEST(Pgd, StaysInBoxAndNeverWorseThanCentre) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 60; ++t) {
    const auto inst = fuzz::random_instance(rng, 2);
    const auto w = inst.R.lower;
    const std::size_t out = inst.net.output_dim();
    std::vector<Objective> objs = {objective::OutputExtreme{0, true}, objective::Deviation{0, 0.3}};
    if (out >= 2) {
      objs.push_back(objective::Untargeted{0});
      objs.push_back(objective::MinimizeProbability{1});
      objs.push_back(objective::MaximizeProbability{0});
      objs.push_back(objective::SpecViolation{argmax_spec(0, out)});
    }
    for (const auto& o : objs) {
      AttackConfig cfg;
      cfg.objective = o;
      cfg.seed = static_cast<std::uint64_t>(t);
      const auto r = pgd(inst.net, w, inst.T, cfg);
      ASSERT_TRUE(inst.T.contains(r.x));
      EXPECT_GE(r.loss, objective_value(inst.net, w, inst.T.center(), o));
      EXPECT_DOUBLE_EQ(r.loss, objective_value(inst.net, w, r.x, o));
    }
  }
}

TEST(Pgd, MoreRestartsNeverWorse) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const auto inst = fuzz::random_instance(rng, 2);
    AttackConfig cfg;
    cfg.seed = 99;
    cfg.objective = objective::OutputExtreme{0, t % 2 == 0};
    double prev = -INFINITY;
    for (int r = 1; r <= 5; ++r) {
      cfg.restarts = r;
      const double loss = pgd(inst.net, inst.R.lower, inst.T, cfg).loss;
      EXPECT_GE(loss, prev);
      prev = loss;
    }
  }
}

TEST(Pgd, RejectsZeroIterations) {
  const Network net({{1, 1, true, ActivationKind::identity}});
  AttackConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(pgd(net, WeightVector{1.0, 0.0}, InputBox({0.0}, {1.0}), cfg), DomainError);
}

TEST(Grad, LinearNet) {
  const Network net({{1, 1, false, ActivationKind::identity}});
  for (double x : {-3.0, 0.0, 1.7})
    EXPECT_DOUBLE_EQ(grad(net, WeightVector{2.0}, std::vector<double>{x}, objective::OutputExtreme{0, true})[0], 2.0);
}

TEST(Grad, SoftmaxCrossEntropyAtUniformPrediction) {
  // identity read-out: logits = x, so d CE / d x = p - onehot
  const Network net({{3, 3, false, ActivationKind::identity}});
  const WeightVector eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const auto g = grad(net, eye, std::vector<double>{0.4, 0.4, 0.4}, objective::Untargeted{1});
  EXPECT_NEAR(g[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g[1], 1.0 / 3.0 - 1.0, 1e-15);
  EXPECT_NEAR(g[2], 1.0 / 3.0, 1e-15);
}

TEST(Grad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int t = 0; t < 40; ++t) {
    const bool smooth = t % 2 == 0;
    const auto net = Network::mlp({3, 6, 5, 3}, smooth ? ActivationKind::tanh : ActivationKind::relu);
    const auto w = random_weights(net, rng);
    std::vector<double> x(3);
    for (double& v : x) v = n(rng);
    const std::vector<Objective> objs = {objective::Untargeted{1}, objective::MinimizeProbability{2},
                                         objective::MaximizeProbability{0}, objective::OutputExtreme{1, true}};
    for (const auto& o : objs) {
      const auto g = grad(net, w, x, o);
      const double h = 1e-6;
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        if (!smooth) {
          // skip points whose difference stencil crosses a relu kink
          const auto a = forward_trace(net, w, xp), b = forward_trace(net, w, xm);
          bool kink = false;
          for (std::size_t k = 0; k + 1 < a.pre.size(); ++k)
            for (std::size_t j = 0; j < a.pre[k].size(); ++j) kink = kink || (a.pre[k][j] > 0) != (b.pre[k][j] > 0);
          if (kink) continue;
        }
        const double fd = (objective_value(net, w, xp, o) - objective_value(net, w, xm, o)) / (2 * h);
        EXPECT_NEAR(g[i], fd, std::max(1e-5, 1e-3 * std::abs(g[i])));
      }
    }
  }
}
