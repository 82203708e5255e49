#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bnncert/posterior.hpp"
#include "oracles.hpp"

using namespace bnncert;

namespace {

WeightBox box1(double lo, double hi) { return WeightBox({lo}, {hi}); }

std::vector<WeightBox> random_boxes(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0), w(0.2, 1.2);
  std::vector<WeightBox> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> lo(dim), hi(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const double center = c(rng), half = w(rng);
      lo[d] = center - half;
      hi[d] = center + half;
    }
    out.emplace_back(lo, hi);
  }
  return out;
}

}  // namespace

TEST(GaussianPosterior, Invariants) {
  EXPECT_THROW(GaussianPosterior({0.0}, {0.0}), DomainError);
  EXPECT_THROW(GaussianPosterior({0.0}, {-1.0}), DomainError);
  EXPECT_THROW(GaussianPosterior({0.0, 1.0}, {1.0}), ShapeError);
}

TEST(SamplePosterior, Invariants) {
  EXPECT_THROW(SamplePosterior(std::vector<WeightVector>{}), DomainError);
  EXPECT_THROW(SamplePosterior({{1.0}, {2.0}}, {0.5, 0.6}), DomainError);
  EXPECT_NO_THROW(SamplePosterior({{1.0}, {2.0}}, {0.5, 0.5 + 1e-12}));
  EXPECT_THROW(SamplePosterior(std::vector<WeightVector>{{1.0}, {2.0, 3.0}}), ShapeError);
  const SamplePosterior s({{1.0}, {2.0}, {3.0}, {4.0}});
  EXPECT_DOUBLE_EQ(s.weights[2], 0.25);
}

TEST(Sample, DegenerateGaussian) {
  const GaussianPosterior q({1.5, -2.0}, {1e-20, 1e-20});
  const auto w = sample(q, 123);
  EXPECT_NEAR(w[0], 1.5, 1e-8);
  EXPECT_NEAR(w[1], -2.0, 1e-8);
}

TEST(Sample, SingleAtom) {
  const Posterior p = SamplePosterior({{0.25, 0.75}});
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample(p, s), (WeightVector{0.25, 0.75}));
}

TEST(Sample, StandardNormalMean) {
  const GaussianPosterior q({0.0}, {1.0});
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 100000; ++i) sum += sample(q, derive_seed(7, i))[0];
  EXPECT_NEAR(sum / 100000.0, 0.0, 0.02);
}

TEST(Sample, WeightedAtomsFollowWeights) {
  const SamplePosterior q({{0.0}, {1.0}}, {0.2, 0.8});
  int ones = 0;
  for (std::uint64_t i = 0; i < 20000; ++i) ones += sample(q, derive_seed(1, i))[0] == 1.0;
  EXPECT_NEAR(ones / 20000.0, 0.8, 0.02);
}

TEST(MakeBox, Examples) {
  const Posterior g = GaussianPosterior({0.0}, {4.0});
  auto b = make_box({1.0}, 0.0, g);
  EXPECT_EQ(b.lower, b.upper);
  b = make_box({1.0}, 2.0, g);
  EXPECT_DOUBLE_EQ(b.lower[0], -3.0);
  EXPECT_DOUBLE_EQ(b.upper[0], 5.0);
  b = make_box({1.0}, 2.0, g, MarginScale::variance);
  EXPECT_DOUBLE_EQ(b.lower[0], -7.0);
  EXPECT_DOUBLE_EQ(b.upper[0], 9.0);
  const Posterior s = SamplePosterior(std::vector<WeightVector>{{1.0}});
  b = make_box({1.0}, 3.0, s);
  EXPECT_EQ(b.lower, b.upper);
  EXPECT_THROW(make_box({1.0}, -1.0, g), DomainError);
}

TEST(BoxMass, FrozenValues) {
  const GaussianPosterior q1({0.0}, {1.0});
  EXPECT_NEAR(box_mass(q1, box1(-50, 50)), 1.0, 1e-12);
  EXPECT_NEAR(box_mass(q1, box1(-1, 1)), 0.682689, 1e-6);
  const GaussianPosterior q2({0.0, 0.0}, {1.0, 1.0});
  EXPECT_NEAR(box_mass(q2, WeightBox({-1, -1}, {1, 1})), 0.466065, 1e-6);
  // quadrature oracle for the same instances
  EXPECT_NEAR(oracle::normal_mass_quadrature(0, 1, -1, 1), 0.682689, 1e-6);
}

TEST(BoxMass, AgreesWithQuadrature) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t dim = 1 + t % 6;
    std::vector<double> mu(dim), var(dim), lo(dim), hi(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      mu[d] = n(rng);
      var[d] = u(rng);
      lo[d] = mu[d] + 2.0 * n(rng);
      hi[d] = lo[d] + 3.0 * u(rng);
    }
    const GaussianPosterior q(mu, var);
    const WeightBox b(lo, hi);
    EXPECT_NEAR(box_mass(q, b), oracle::gaussian_box_quadrature(q, b), 1e-8);
  }
}

TEST(BoxMass, FarTailsStayAccurate) {
  // relative accuracy where 1 - Phi cancels catastrophically
  const double m = normal_interval_mass(0.0, 1.0, 8.0, 9.0);
  EXPECT_NEAR(m / oracle::normal_mass_quadrature(0.0, 1.0, 8.0, 9.0), 1.0, 1e-9);
  EXPECT_GT(normal_interval_mass(0.0, 1.0, -30.0, -29.0), 0.0);
}

TEST(BoxMass, ManyWeightsDoNotUnderflowPrematurely) {
  const std::size_t n = 2000;
  const GaussianPosterior q(std::vector<double>(n, 0.0), std::vector<double>(n, 1.0));
  const WeightBox b(std::vector<double>(n, -4.0), std::vector<double>(n, 4.0));
  const double per = normal_interval_mass(0, 1, -4, 4);
  EXPECT_NEAR(box_mass(q, b) / std::pow(per, n), 1.0, 1e-9);
}

TEST(BoxMass, MonotoneUnderEnlargement) {
  const GaussianPosterior q({0.3, -0.2}, {0.5, 2.0});
  double prev = 0.0;
  for (double r = 0.0; r < 5.0; r += 0.25) {
    const double m = box_mass(q, WeightBox({-r, -r}, {r, r}));
    EXPECT_GE(m, prev);
    EXPECT_LE(m, 1.0);
    prev = m;
  }
}

TEST(BoxMass, SamplePosteriorUsesClosedBoxes) {
  const SamplePosterior q({{0.0}, {1.0}, {2.0}}, {0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(box_mass(q, box1(0.0, 1.0)), 0.5);
  EXPECT_DOUBLE_EQ(box_mass(q, box1(1.0, 1.0)), 0.3);
  EXPECT_DOUBLE_EQ(box_mass(q, box1(1.5, 1.9)), 0.0);
  double total = 0.0;
  for (const auto& w : q.samples) total += box_mass(q, WeightBox::point(w));
  EXPECT_DOUBLE_EQ(total, 1.0);
}

TEST(Bonferroni, DisjointBoxes) {
  const Posterior q = GaussianPosterior({0.0}, {1.0});
  const std::vector<WeightBox> boxes = {box1(-2, -1), box1(0, 1)};
  const double p1 = box_mass(q, boxes[0]), p2 = box_mass(q, boxes[1]);
  const auto b = bonferroni_bounds(boxes, q, 2, 1);
  EXPECT_NEAR(b.lower, p1 + p2, 1e-15);
  EXPECT_NEAR(b.upper, p1 + p2, 1e-15);
}

TEST(Bonferroni, TwoOverlappingBoxesAreExact) {
  const Posterior q = GaussianPosterior({0.0}, {1.0});
  const auto b = bonferroni_bounds({box1(0, 2), box1(1, 3)}, q, 2, 1);
  EXPECT_NEAR(b.lower, oracle::normal_mass_quadrature(0, 1, 0, 3), 1e-10);
}

TEST(Bonferroni, SandwichesExactUnion) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + t % 7, dim = 1 + t % 3;
    const GaussianPosterior g(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
    const Posterior q = g;
    const auto boxes = random_boxes(n, dim, rng);
    const double exact = oracle::union_inclusion_exclusion(boxes, q);
    const double cells = oracle::union_cell_decomposition(boxes, g);
    EXPECT_NEAR(exact, cells, 1e-9);
    double prev_upper = 1.0, prev_lower = 0.0;
    for (std::size_t dl = 2, du = 1; du <= n + 1; dl += 2, du += 2) {
      const auto b = bonferroni_bounds(boxes, q, dl, du);
      EXPECT_LE(b.lower, exact + 1e-12);
      EXPECT_GE(b.upper, exact - 1e-12);
      EXPECT_LE(b.upper, prev_upper + 1e-12);
      EXPECT_GE(b.lower, prev_lower - 1e-12);
      prev_upper = b.upper;
      prev_lower = b.lower;
    }
    const std::size_t even = n % 2 == 0 ? n : n + 1, odd = n % 2 == 1 ? n : n + 1;
    const auto full = bonferroni_bounds(boxes, q, even, odd);
    EXPECT_NEAR(full.lower, exact, 1e-10);
    EXPECT_NEAR(full.upper, exact, 1e-10);
  }
}

TEST(Bonferroni, DepthOneIsUnionBound) {
  std::mt19937_64 rng(2);
  const Posterior q = GaussianPosterior({0.0, 0.0}, {1.0, 1.0});
  const auto boxes = random_boxes(5, 2, rng);
  double sum = 0.0;
  for (const auto& b : boxes) sum += box_mass(q, b);
  EXPECT_NEAR(bonferroni_bounds(boxes, q, 2, 1).upper, std::min(sum, 1.0), 1e-15);
}

TEST(Bonferroni, Errors) {
  const Posterior q = GaussianPosterior({0.0}, {1.0});
  EXPECT_THROW(bonferroni_bounds({box1(0, 1)}, q, 3, 1), DomainError);
  EXPECT_THROW(bonferroni_bounds({box1(0, 1)}, q, 2, 2), DomainError);
  const auto e = bonferroni_bounds({}, q, 2, 1);
  EXPECT_EQ(e.lower, 0.0);
  EXPECT_EQ(e.upper, 0.0);
}

TEST(Disjointify, GreedyRule) {
  auto kept = disjointify({box1(0, 1), box1(2, 3)});
  EXPECT_EQ(kept.size(), 2u);
  kept = disjointify({box1(0, 2), box1(1, 3)});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], box1(0, 2));
  kept = disjointify({box1(0, 1), box1(2, 3), box1(0.5, 2.5)});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1], box1(2, 3));
}

TEST(DeriveSeed, DistinctAndStable) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}
