#include <random>

#include <gtest/gtest.h>

#include "bnncert/spec.hpp"

using namespace bnncert;

namespace {
const ClipRange kUnit{{0.0}, {1.0}};
}

TEST(LinfBall, Examples) {
  auto b = linf_ball(std::vector<double>{0.5}, 0.0);
  EXPECT_EQ(b.lower(), std::vector<double>{0.5});
  EXPECT_EQ(b.upper(), std::vector<double>{0.5});

  b = linf_ball(std::vector<double>{0.5}, 0.1, kUnit);
  EXPECT_DOUBLE_EQ(b.lower()[0], 0.4);
  EXPECT_DOUBLE_EQ(b.upper()[0], 0.6);

  b = linf_ball(std::vector<double>{0.05}, 0.1, kUnit);
  EXPECT_DOUBLE_EQ(b.lower()[0], 0.0);
  EXPECT_DOUBLE_EQ(b.upper()[0], 0.15);
}

TEST(LinfBall, PerDimensionRadius) {
  const auto b = linf_ball(std::vector<double>{0.0, 1.0}, std::vector<double>{0.1, 0.5});
  EXPECT_DOUBLE_EQ(b.lower()[1], 0.5);
  EXPECT_DOUBLE_EQ(b.upper()[0], 0.1);
}

TEST(LinfBall, Errors) {
  EXPECT_THROW(linf_ball(std::vector<double>{0.5}, -0.1), DomainError);
  EXPECT_THROW(linf_ball(std::vector<double>{0.5, 0.5}, std::vector<double>{0.1, 0.1, 0.1}), ShapeError);
}

TEST(LinfBall, Monotone) {
  const std::vector<double> x = {0.2, 0.9};
  const ClipRange clip{{0.0, 0.0}, {1.0, 1.0}};
  for (double e1 = 0.0; e1 < 0.5; e1 += 0.05)
    for (double e2 = e1; e2 < 0.5; e2 += 0.07)
      EXPECT_TRUE(linf_ball(x, e1, clip).subset_of(linf_ball(x, e2, clip)));
}

TEST(ArgmaxSpec, Rows) {
  auto s = argmax_spec(0, 2);
  EXPECT_EQ(s.C(), (std::vector<std::vector<double>>{{1, -1}}));
  EXPECT_EQ(s.d(), std::vector<double>{0});
  s = argmax_spec(1, 2);
  EXPECT_EQ(s.C(), (std::vector<std::vector<double>>{{-1, 1}}));
  s = argmax_spec(0, 3);
  EXPECT_EQ(s.C(), (std::vector<std::vector<double>>{{1, -1, 0}, {1, 0, -1}}));
  EXPECT_EQ(s.d(), (std::vector<double>{0, 0}));
  EXPECT_THROW(argmax_spec(0, 1), DomainError);
  EXPECT_THROW(argmax_spec(2, 2), DomainError);
}

TEST(Contains, Examples) {
  const auto S = argmax_spec(0, 2);
  EXPECT_TRUE(contains(S, std::vector<double>{2, 0}, std::vector<double>{3, 1}));
  EXPECT_FALSE(contains(S, std::vector<double>{0, 0}, std::vector<double>{1, 1}));
  EXPECT_TRUE(contains(S, std::vector<double>{1, 0.5}, std::vector<double>{1, 0.5}));
  EXPECT_THROW(contains(S, std::vector<double>{0}, std::vector<double>{1}), ShapeError);
}

TEST(Excludes, Examples) {
  const auto S = argmax_spec(0, 2);
  EXPECT_TRUE(excludes(S, std::vector<double>{0, 2}, std::vector<double>{1, 3}));
  EXPECT_FALSE(excludes(S, std::vector<double>{0, 0}, std::vector<double>{1, 1}));
  EXPECT_FALSE(excludes(S, std::vector<double>{2, 0}, std::vector<double>{3, 1}));
}

TEST(ContainsExcludes, FuzzAgainstSampledPoints) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int contained = 0, excluded = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t dim = 3, rows = 1 + t % 3;
    std::vector<std::vector<double>> C(rows, std::vector<double>(dim));
    std::vector<double> d(rows);
    for (auto& r : C)
      for (double& v : r) v = n(rng);
    for (double& v : d) v = n(rng);
    const OutputSpec S(C, d);
    std::vector<double> lo(dim), hi(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      lo[i] = n(rng);
      hi[i] = lo[i] + 0.5 * u(rng);
    }
    const bool in = contains(S, lo, hi), out = excludes(S, lo, hi);
    ASSERT_FALSE(in && out);
    contained += in;
    excluded += out;
    if (!in && !out) continue;
    for (int k = 0; k < 10000; ++k) {
      std::vector<double> y(dim);
      for (std::size_t i = 0; i < dim; ++i) y[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
      if (in) {
        ASSERT_TRUE(S.satisfied(y));
      }
      if (out) {
        ASSERT_FALSE(S.satisfied(y));
      }
    }
  }
  EXPECT_GT(contained, 0);
  EXPECT_GT(excluded, 0);
}

TEST(OutputSpec, ShapeChecks) {
  EXPECT_THROW(OutputSpec({{1, 2}}, {0, 0}), ShapeError);
  EXPECT_THROW(OutputSpec({{1, 2}, {1}}, {0, 0}), ShapeError);
}

TEST(InputBox, Invariants) {
  EXPECT_THROW(InputBox({1.0}, {0.0}), DomainError);
  EXPECT_THROW(InputBox({0.0}, {INFINITY}), DomainError);
  EXPECT_THROW(InputBox({0.0, 1.0}, {1.0}), ShapeError);
}
