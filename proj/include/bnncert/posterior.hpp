#pragma once

// Approximate weight posteriors, weight hyper-rectangles and exact posterior
// mass over those rectangles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bnncert/error.hpp"
#include "bnncert/net.hpp"

namespace bnncert {

/// Diagonal Gaussian N(mean, diag(variance)) over the flat weight vector.
struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> variance;

  GaussianPosterior() = default;
  GaussianPosterior(std::vector<double> m, std::vector<double> v)
      : mean(std::move(m)), variance(std::move(v)) {
    detail::require_shape(mean.size() == variance.size(), "mean and variance lengths differ");
    for (std::size_t i = 0; i < variance.size(); ++i)
      if (!(variance[i] > 0.0) || !std::isfinite(variance[i]))
        throw DomainError("variance[" + std::to_string(i) + "] must be positive and finite");
  }

  std::size_t size() const { return mean.size(); }
};

/// Weighted set of weight vectors (e.g. HMC draws).
struct SamplePosterior {
  std::vector<WeightVector> samples;
  std::vector<double> weights;

  SamplePosterior() = default;
  explicit SamplePosterior(std::vector<WeightVector> s) : samples(std::move(s)) {
    detail::require_domain(!samples.empty(), "sample posterior needs at least one sample");
    weights.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
    validate();
  }
  SamplePosterior(std::vector<WeightVector> s, std::vector<double> w)
      : samples(std::move(s)), weights(std::move(w)) {
    validate();
  }

  std::size_t size() const { return samples.empty() ? 0 : samples.front().size(); }

  void validate() const {
    detail::require_domain(!samples.empty(), "sample posterior needs at least one sample");
    detail::require_shape(weights.size() == samples.size(), "one weight per sample required");
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      detail::require_shape(samples[i].size() == samples.front().size(),
                            "sample " + std::to_string(i) + " has a different length");
      detail::require_domain(weights[i] >= 0.0, "sample weights must be non-negative");
      total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("sample weights must sum to 1");
  }
};

using Posterior = std::variant<GaussianPosterior, SamplePosterior>;

inline std::size_t posterior_size(const Posterior& p) {
  return std::visit([](const auto& q) { return q.size(); }, p);
}

inline bool is_gaussian(const Posterior& p) { return std::holds_alternative<GaussianPosterior>(p); }

/// Axis-aligned rectangle [lower, upper] in weight space.
struct WeightBox {
  std::vector<double> lower;
  std::vector<double> upper;

  WeightBox() = default;
  WeightBox(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
    detail::require_shape(lower.size() == upper.size(), "weight box bounds differ in length");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i])) throw DomainError("weight box lower > upper at " + std::to_string(i));
  }

  static WeightBox point(const WeightVector& w) { return WeightBox(w, w); }

  std::size_t size() const { return lower.size(); }

  std::vector<double> center() const {
    std::vector<double> c(size());
    for (std::size_t i = 0; i < size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
  }

  bool contains(std::span<const double> w) const {
    if (w.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (w[i] < lower[i] || w[i] > upper[i]) return false;
    return true;
  }

  friend bool operator==(const WeightBox&, const WeightBox&) = default;
};

/// Closed-box intersection; nullopt when empty.
inline std::optional<WeightBox> intersect(const WeightBox& a, const WeightBox& b) {
  detail::require_shape(a.size() == b.size(), "intersecting boxes of different dimension");
  WeightBox out;
  out.lower.resize(a.size());
  out.upper.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.lower[i] = std::max(a.lower[i], b.lower[i]);
    out.upper[i] = std::min(a.upper[i], b.upper[i]);
    if (out.lower[i] > out.upper[i]) return std::nullopt;
  }
  return out;
}

inline bool overlaps(const WeightBox& a, const WeightBox& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::max(a.lower[i], b.lower[i]) > std::min(a.upper[i], b.upper[i])) return false;
  return true;
}

/// How the weight margin gamma scales with the posterior spread.
enum class MarginScale {
  std_dev,   // half-width = gamma * sqrt(variance)
  variance,  // half-width = gamma * variance
};

inline std::string_view to_string(MarginScale s) {
  return s == MarginScale::std_dev ? "std" : "var";
}

// ---------------------------------------------------------------------------
// Sampling

/// Deterministic per-item seed derived from a base seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline WeightVector sample(const GaussianPosterior& q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightVector w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = q.mean[i] + std::sqrt(q.variance[i]) * normal(rng);
  return w;
}

inline std::size_t sample_index(const SamplePosterior& q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(q.weights.begin(), q.weights.end());
  return pick(rng);
}

inline WeightVector sample(const SamplePosterior& q, std::uint64_t seed) {
  return q.samples[sample_index(q, seed)];
}

inline WeightVector sample(const Posterior& p, std::uint64_t seed) {
  return std::visit([seed](const auto& q) { return sample(q, seed); }, p);
}

// ---------------------------------------------------------------------------
// Weight boxes

inline WeightBox make_box(const WeightVector& w, double gamma, const Posterior& p,
                          MarginScale scale = MarginScale::std_dev) {
  if (!(gamma >= 0.0)) throw DomainError("weight margin gamma must be non-negative");
  detail::require_shape(w.size() == posterior_size(p), "weight vector does not match posterior");
  const auto* g = std::get_if<GaussianPosterior>(&p);
  if (g == nullptr || gamma == 0.0) return WeightBox::point(w);
  std::vector<double> lo(w.size()), hi(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double hw =
        gamma * (scale == MarginScale::std_dev ? std::sqrt(g->variance[i]) : g->variance[i]);
    lo[i] = w[i] - hw;
    hi[i] = w[i] + hw;
  }
  return WeightBox(std::move(lo), std::move(hi));
}

// ---------------------------------------------------------------------------
// Posterior mass of boxes

/// P(lo <= X <= hi) for X ~ N(mean, var), avoiding cancellation in the tails.
inline double normal_interval_mass(double mean, double var, double lo, double hi) {
  if (!(lo <= hi)) return 0.0;
  const double s = std::sqrt(2.0 * var);
  const double a = (lo - mean) / s;
  const double b = (hi - mean) / s;
  double m;
  if (a >= 0.0) {
    m = 0.5 * (std::erfc(a) - std::erfc(b));
  } else if (b <= 0.0) {
    m = 0.5 * (std::erfc(-b) - std::erfc(-a));
  } else {
    m = 0.5 * (std::erf(b) - std::erf(a));
  }
  return std::clamp(m, 0.0, 1.0);
}

inline double box_mass(const GaussianPosterior& q, const WeightBox& box) {
  detail::require_shape(box.size() == q.size(), "box does not match posterior dimension");
  // log-space product: hundreds of factors below 1 underflow otherwise
  double log_mass = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const double m = normal_interval_mass(q.mean[j], q.variance[j], box.lower[j], box.upper[j]);
    if (m <= 0.0) return 0.0;
    log_mass += std::log(m);
  }
  return std::clamp(std::exp(log_mass), 0.0, 1.0);
}

inline double box_mass(const SamplePosterior& q, const WeightBox& box) {
  detail::require_shape(box.size() == q.size(), "box does not match posterior dimension");
  double mass = 0.0;
  for (std::size_t i = 0; i < q.samples.size(); ++i)
    if (box.contains(q.samples[i])) mass += q.weights[i];
  return std::clamp(mass, 0.0, 1.0);
}

inline double box_mass(const Posterior& p, const WeightBox& box) {
  return std::visit([&box](const auto& q) { return box_mass(q, box); }, p);
}

// ---------------------------------------------------------------------------
// Overlapping boxes

struct MassBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// S_1..S_depth: sums of posterior mass over all j-wise intersections.
/// Subsets with an empty intersection prune their supersets.
inline std::vector<double> intersection_sums(const std::vector<WeightBox>& boxes, const Posterior& p,
                                             std::size_t depth) {
  std::vector<double> sums(depth + 1, 0.0);
  if (boxes.empty() || depth == 0) return sums;
  struct Frame {
    std::size_t next;
    std::size_t level;
    WeightBox box;
  };
  std::vector<Frame> stack;
  for (std::size_t i = boxes.size(); i-- > 0;) stack.push_back({i + 1, 1, boxes[i]});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    sums[f.level] += box_mass(p, f.box);
    if (f.level == depth) continue;
    for (std::size_t j = boxes.size(); j-- > f.next;) {
      if (auto inter = intersect(f.box, boxes[j])) stack.push_back({j + 1, f.level + 1, std::move(*inter)});
    }
  }
  return sums;
}

/// Truncated inclusion-exclusion bounds on the posterior mass of a union of boxes.
/// depth_lower must be even, depth_upper odd; both are capped at the box count.
inline MassBounds bonferroni_bounds(const std::vector<WeightBox>& boxes, const Posterior& p,
                                    std::size_t depth_lower, std::size_t depth_upper) {
  if (depth_lower < 2 || depth_lower % 2 != 0)
    throw DomainError("Bonferroni lower depth must be an even integer >= 2");
  if (depth_upper < 1 || depth_upper % 2 != 1)
    throw DomainError("Bonferroni upper depth must be an odd integer >= 1");
  if (boxes.empty()) return {0.0, 0.0};
  const std::size_t dl = std::min(depth_lower, boxes.size());
  const std::size_t du = std::min(depth_upper, boxes.size());
  const auto sums = intersection_sums(boxes, p, std::max(dl, du));
  auto partial = [&sums](std::size_t d) {
    double acc = 0.0;
    for (std::size_t j = 1; j <= d; ++j) acc += (j % 2 == 1 ? 1.0 : -1.0) * sums[j];
    return acc;
  };
  MassBounds b{partial(dl), partial(du)};
  b.lower = std::clamp(b.lower, 0.0, 1.0);
  b.upper = std::clamp(b.upper, 0.0, 1.0);
  return b;
}

/// Indices of a greedily chosen pairwise-disjoint subset (earlier boxes win).
inline std::vector<std::size_t> disjoint_indices(const std::vector<WeightBox>& boxes) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const bool clash = std::any_of(kept.begin(), kept.end(),
                                   [&](std::size_t k) { return overlaps(boxes[k], boxes[i]); });
    if (!clash) kept.push_back(i);
  }
  return kept;
}

inline std::vector<WeightBox> disjointify(const std::vector<WeightBox>& boxes) {
  std::vector<WeightBox> out;
  for (std::size_t i : disjoint_indices(boxes)) out.push_back(boxes[i]);
  return out;
}

/// Predicted class of the mean network (Gaussian) or the weighted ensemble (samples).
inline std::size_t predicted_class(const Network& net, const Posterior& p, std::span<const double> x) {
  std::vector<double> mean_prob(net.output_dim(), 0.0);
  if (const auto* g = std::get_if<GaussianPosterior>(&p)) {
    mean_prob = softmax(forward(net, g->mean, x));
  } else {
    const auto& s = std::get<SamplePosterior>(p);
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      const auto pr = softmax(forward(net, s.samples[i], x));
      for (std::size_t c = 0; c < pr.size(); ++c) mean_prob[c] += s.weights[i] * pr[c];
    }
  }
  return static_cast<std::size_t>(std::max_element(mean_prob.begin(), mean_prob.end()) - mean_prob.begin());
}

}  // namespace bnncert
