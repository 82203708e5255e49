#pragma once

// Empirical cross-checks for the certified bounds: Monte Carlo estimates of
// P_safe and of the predictive mean, with grid and PGD probes over the input box.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "bnncert/attack.hpp"
#include "bnncert/certify.hpp"
#include "bnncert/net.hpp"
#include "bnncert/parallel.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/spec.hpp"

namespace bnncert::validate {

struct ProportionInterval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact two-sided (1 - alpha) binomial interval.
inline ProportionInterval clopper_pearson(std::size_t k, std::size_t n, double alpha = 0.01) {
  if (n == 0) return {0.0, 1.0};
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  ProportionInterval r;
  r.lo = k == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<double>(kk, nn - kk + 1.0), alpha / 2);
  r.hi = k == n ? 1.0
                : boost::math::quantile(boost::math::beta_distribution<double>(kk + 1.0, nn - kk), 1.0 - alpha / 2);
  return r;
}

/// Two-sided (1 - alpha) Hoeffding half-width for the mean of n draws in [0, range].
inline double hoeffding_slack(std::size_t n, double alpha = 0.01, double range = 1.0) {
  return range * std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

/// Regular grid of about `points` inputs covering T (end points included).
inline std::vector<std::vector<double>> probe_grid(const InputBox& T, std::size_t points) {
  std::size_t free_dims = 0;
  for (std::size_t i = 0; i < T.dim(); ++i) free_dims += T.upper()[i] > T.lower()[i];
  const std::size_t per =
      free_dims == 0 ? 1
                     : std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(
                                                    std::pow(static_cast<double>(points), 1.0 / free_dims) + 1e-9)));
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> idx(T.dim(), 0);
  for (;;) {
    std::vector<double> x(T.dim());
    for (std::size_t i = 0; i < T.dim(); ++i) {
      const double w = T.upper()[i] - T.lower()[i];
      x[i] = w > 0 ? T.lower()[i] + w * static_cast<double>(idx[i]) / static_cast<double>(per - 1) : T.lower()[i];
    }
    out.push_back(std::move(x));
    std::size_t d = 0;
    for (; d < T.dim(); ++d) {
      if (T.upper()[d] <= T.lower()[d]) continue;
      if (++idx[d] < per) break;
      idx[d] = 0;
    }
    if (d == T.dim()) break;
  }
  return out;
}

struct ProbeConfig {
  std::size_t grid_points = 1000;
  int attack_iterations = 25;
  int attack_restarts = 3;
};

/// Empirical safety of one weight vector: no grid point and no PGD iterate violates S.
inline bool probe_safe(const Network& net, const WeightVector& w, const InputBox& T, const OutputSpec& S,
                       const std::vector<std::vector<double>>& grid, const ProbeConfig& pc, std::uint64_t seed) {
  for (const auto& x : grid)
    if (S.margin(forward(net, w, x)) < 0.0) return false;
  AttackConfig ac;
  ac.iterations = pc.attack_iterations;
  ac.restarts = pc.attack_restarts;
  ac.seed = seed;
  ac.objective = objective::SpecViolation{S};
  const auto adv = pgd(net, w, T, ac);
  return S.margin(forward(net, w, adv.x)) >= 0.0;
}

struct PsafeEstimate {
  std::size_t safe = 0;
  std::size_t draws = 0;
  ProportionInterval ci;

  double estimate() const { return draws ? static_cast<double>(safe) / static_cast<double>(draws) : 0.0; }
};

/// Monte Carlo P_safe with a probe per posterior draw. The probe can miss
/// violations, so the estimate leans high.
inline PsafeEstimate mc_psafe(const Network& net, const Posterior& p, const InputBox& T, const OutputSpec& S,
                              std::size_t draws, std::uint64_t seed, const ProbeConfig& pc = {},
                              std::size_t threads = 1, double alpha = 0.01) {
  const auto grid = probe_grid(T, pc.grid_points);
  std::vector<char> safe(draws, 0);
  parallel_for(draws, threads, [&](std::size_t i) {
    const auto w = sample(p, derive_seed(seed, i));
    safe[i] = probe_safe(net, w, T, S, grid, pc, derive_seed(seed ^ 0x9E0BEULL, i)) ? 1 : 0;
  });
  PsafeEstimate e;
  e.draws = draws;
  for (char s : safe) e.safe += s != 0;
  e.ci = clopper_pearson(e.safe, draws, alpha);
  return e;
}

/// Predictive mean at x over the given weight draws: softmax means, or raw outputs when regression.
inline std::vector<double> predictive_mean(const Network& net, const std::vector<WeightVector>& ws,
                                           std::span<const double> x, bool regression) {
  std::vector<double> acc(net.output_dim(), 0.0);
  for (const auto& w : ws) {
    const auto y = forward(net, w, x);
    const auto v = regression ? y : softmax(y);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += v[c];
  }
  for (double& a : acc) a /= static_cast<double>(ws.size());
  return acc;
}

/// Probe inputs for D_safe checks: the centre, PGD points that push the ensemble
/// mean of `target` down and up, then corners and uniform points up to `count`.
inline std::vector<std::vector<double>> dsafe_probes(const Network& net, const std::vector<WeightVector>& ensemble,
                                                     const InputBox& T, std::size_t target, bool regression,
                                                     std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<double>> pts{T.center()};
  AttackConfig ac;
  ac.seed = seed;
  if (regression)
    ac.objective = objective::OutputExtreme{target, false};
  else
    ac.objective = objective::MinimizeProbability{target};
  pts.push_back(pgd(net, ensemble, T, ac).x);
  if (regression)
    ac.objective = objective::OutputExtreme{target, true};
  else
    ac.objective = objective::MaximizeProbability{target};
  pts.push_back(pgd(net, ensemble, T, ac).x);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (pts.size() < count) {
    const bool corner = pts.size() % 2 == 0;
    std::vector<double> x(T.dim());
    for (std::size_t i = 0; i < T.dim(); ++i) {
      const double lo = T.lower()[i], hi = T.upper()[i];
      x[i] = corner ? (coin(rng) ? hi : lo) : std::clamp(lo + (hi - lo) * u(rng), lo, hi);
    }
    pts.push_back(std::move(x));
  }
  pts.resize(count);
  return pts;
}

struct DsafeEstimate {
  double min_mean = 0.0;  // smallest probed predictive mean of the target
  double max_mean = 0.0;  // largest
  double slack = 0.0;     // per-point (1 - alpha) half-width
};

/// Min and max over probe points of the Monte Carlo predictive mean of `target`.
/// Classification slack is Hoeffding on [0, 1]; regression uses 3 sample standard errors.
inline DsafeEstimate mc_dsafe(const Network& net, const Posterior& p, const InputBox& T, std::size_t target,
                              bool regression, std::size_t draws, std::size_t probes, std::uint64_t seed,
                              std::size_t threads = 1, double alpha = 0.01) {
  std::vector<WeightVector> ws(draws);
  for (std::size_t i = 0; i < draws; ++i) ws[i] = sample(p, derive_seed(seed, i));
  const std::vector<WeightVector> ensemble(ws.begin(), ws.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(draws, 64)));
  const auto pts = dsafe_probes(net, ensemble, T, target, regression, probes, derive_seed(seed, 0xD5AFEULL));
  std::vector<double> means(pts.size()), sds(pts.size(), 0.0);
  parallel_for(pts.size(), threads, [&](std::size_t k) {
    double s = 0.0, s2 = 0.0;
    for (const auto& w : ws) {
      const auto y = forward(net, w, pts[k]);
      const double v = regression ? y[target] : softmax(y)[target];
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(ws.size());
    means[k] = s / n;
    sds[k] = std::sqrt(std::max(0.0, s2 / n - means[k] * means[k]));
  });
  DsafeEstimate e;
  e.min_mean = *std::min_element(means.begin(), means.end());
  e.max_mean = *std::max_element(means.begin(), means.end());
  if (regression) {
    const double sd = *std::max_element(sds.begin(), sds.end());
    e.slack = 3.0 * sd / std::sqrt(static_cast<double>(draws));
  } else {
    e.slack = hoeffding_slack(draws, alpha);
  }
  return e;
}

struct SandwichCheck {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  double estimate_lo = 0.0;  // estimate minus/plus slack bracket
  double estimate_hi = 0.0;
  bool ok = false;
};

/// psafe_lower <= CI upper end and psafe_upper >= CI lower end.
inline SandwichCheck psafe_sandwich(std::string name, const Network& net, const Posterior& p, const InputBox& T,
                                    const OutputSpec& S, const CertifyConfig& cfg, std::size_t draws,
                                    std::uint64_t seed, const ProbeConfig& pc = {}) {
  SandwichCheck c;
  c.name = std::move(name);
  c.lower = psafe_lower(net, p, T, S, cfg).value;
  c.upper = psafe_upper(net, p, T, S, cfg).value;
  const auto mc = mc_psafe(net, p, T, S, draws, seed, pc, cfg.threads);
  c.estimate_lo = mc.ci.lo;
  c.estimate_hi = mc.ci.hi;
  c.ok = c.lower <= c.estimate_hi && c.upper >= c.estimate_lo && c.lower <= c.upper;
  return c;
}

/// dsafe_lower <= min probed mean + slack and dsafe_upper >= max probed mean - slack.
inline SandwichCheck dsafe_sandwich(std::string name, const Network& net, const Posterior& p, const InputBox& T,
                                    const CertifyConfig& cfg, const Task& t, std::size_t draws,
                                    std::size_t probes, std::uint64_t seed) {
  SandwichCheck c;
  c.name = std::move(name);
  c.lower = dsafe_lower(net, p, T, cfg, t).value;
  c.upper = dsafe_upper(net, p, T, cfg, t).value;
  const bool regression = std::holds_alternative<task::Regression>(t);
  const std::size_t target =
      regression ? std::get<task::Regression>(t).index : std::get<task::Classification>(t).cls;
  const auto mc = mc_dsafe(net, p, T, target, regression, draws, probes, seed, cfg.threads);
  c.estimate_lo = mc.min_mean - mc.slack;
  c.estimate_hi = mc.max_mean + mc.slack;
  c.ok = c.lower <= mc.min_mean + mc.slack && c.upper >= mc.max_mean - mc.slack && c.lower <= c.upper;
  return c;
}

// ---------------------------------------------------------------------------
// Bundled toy suite

namespace toy {

/// Network with every parameter drawn from N(0, scale^2).
inline WeightVector random_weights(const Network& net, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  WeightVector w(net.num_params());
  for (double& v : w) v = n(rng);
  return w;
}

inline GaussianPosterior random_gaussian(const Network& net, double mean_scale, double sd, std::uint64_t seed) {
  auto mean = random_weights(net, mean_scale, seed);
  return GaussianPosterior(std::move(mean), std::vector<double>(net.num_params(), sd * sd));
}

}  // namespace toy

/// Small fixed suite of sandwich checks across propagation methods, activations,
/// posterior kinds and Bonferroni mode.
inline std::vector<SandwichCheck> run_toy_suite(std::size_t threads = 1, std::size_t draws = 2000) {
  std::vector<SandwichCheck> out;
  ProbeConfig pc;
  pc.grid_points = 400;

  CertifyConfig base;
  base.num_samples = 8;
  base.gamma = 2.0;
  base.threads = threads;

  // 1-D ramp y = relu(x - 0.5) with an almost deterministic posterior
  {
    const auto net = Network::mlp({1, 1, 2}, ActivationKind::relu);
    GaussianPosterior q({1.0, -0.5, 1.0, -1.0, 0.0, 0.2}, std::vector<double>(6, 1e-4));
    const auto T = linf_ball(std::vector<double>{0.7}, 0.1);
    const auto S = argmax_spec(1, 2);  // class 1 wins while x is near 0.7
    for (auto m : {Method::ibp, Method::lbp}) {
      auto cfg = base;
      cfg.method = m;
      out.push_back(psafe_sandwich("ramp psafe " + std::string(to_string(m)), net, q, T, S, cfg, draws, 11, pc));
    }
  }
  for (auto act : {ActivationKind::relu, ActivationKind::tanh}) {
    const auto net = Network::mlp({2, 8, 2}, act);
    const auto q = toy::random_gaussian(net, 1.0, 0.05, act == ActivationKind::relu ? 21 : 22);
    const std::vector<double> x0 = {0.3, -0.2};
    const auto T = linf_ball(x0, 0.05);
    const std::size_t label = predicted_class(net, q, x0);
    const auto S = argmax_spec(label, 2);
    const std::string a(to_string(act));
    for (auto m : {Method::ibp, Method::lbp}) {
      auto cfg = base;
      cfg.method = m;
      out.push_back(psafe_sandwich(a + " psafe " + std::string(to_string(m)), net, q, T, S, cfg, draws, 31, pc));
      out.push_back(dsafe_sandwich(a + " dsafe " + std::string(to_string(m)), net, q, T, cfg,
                                   task::Classification{label}, draws, 32, 32));
    }
    auto cfg = base;
    cfg.bonferroni = BonferroniDepths{2, 1};
    cfg.gamma = 3.0;
    out.push_back(psafe_sandwich(a + " psafe bonferroni", net, q, T, S, cfg, draws, 41, pc));
  }
  // sample posterior with point boxes
  {
    const auto net = Network::mlp({2, 6, 3}, ActivationKind::relu);
    std::vector<WeightVector> atoms;
    for (std::uint64_t i = 0; i < 12; ++i) atoms.push_back(toy::random_weights(net, 1.0, 100 + i));
    const SamplePosterior q(std::move(atoms));
    const std::vector<double> x0 = {0.1, 0.4};
    const auto T = linf_ball(x0, 0.02);
    const auto S = argmax_spec(predicted_class(net, q, x0), 3);
    auto cfg = base;
    cfg.gamma = 0.0;
    cfg.num_samples = 12;
    out.push_back(psafe_sandwich("atoms psafe", net, q, T, S, cfg, draws, 51, pc));
    out.push_back(dsafe_sandwich("atoms dsafe", net, q, T, cfg, task::Classification{0}, draws, 32, 52));
  }
  // regression with an output floor and ceiling
  {
    const auto net = Network::mlp({1, 8, 1}, ActivationKind::tanh);
    const auto q = toy::random_gaussian(net, 0.8, 0.05, 61);
    const auto T = linf_ball(std::vector<double>{0.2}, 0.1);
    auto cfg = base;
    cfg.gamma = 3.0;
    out.push_back(dsafe_sandwich("regression dsafe", net, q, T, cfg, task::Regression{0, -50.0, 50.0}, draws, 32, 62));
  }
  return out;
}

}  // namespace bnncert::validate
