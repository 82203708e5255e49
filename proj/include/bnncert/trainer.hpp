#pragma once

// Desk-scale posteriors: reparameterized mean-field VI, a plain HMC sampler and
// a few synthetic datasets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bnncert/error.hpp"
#include "bnncert/net.hpp"
#include "bnncert/posterior.hpp"

namespace bnncert {

/// Inputs and targets; categorical targets are one-hot rows.
struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
};

inline std::size_t label_of(std::span<const double> onehot) {
  return static_cast<std::size_t>(std::max_element(onehot.begin(), onehot.end()) - onehot.begin());
}

inline std::vector<double> one_hot(std::size_t label, std::size_t n) {
  std::vector<double> v(n, 0.0);
  v.at(label) = 1.0;
  return v;
}

namespace data {

/// Two Gaussian blobs at (-1,-1) and (1,1) with the given spread; linearly separable
/// for small spread.
inline Dataset two_blobs(std::size_t n, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const double s = c == 0 ? -1.0 : 1.0;
    d.x.push_back({s + noise(rng), s + noise(rng)});
    d.y.push_back(one_hot(c, 2));
  }
  return d;
}

/// y = x^3 + noise with x uniform on [-1, 1].
inline Dataset cubic(std::size_t n, double noise_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, noise_std);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng);
    d.x.push_back({x});
    d.y.push_back({x * x * x + noise(rng)});
  }
  return d;
}

/// Advisory label for a normalized 4-D encounter state in [-1, 1]^4:
/// (range, bearing, relative heading, closure). 0 clear of conflict, 1/2 weak
/// left/right, 3/4 strong left/right.
inline std::size_t advisory_label(std::span<const double> s) {
  const double range = s[0], bearing = s[1], heading = s[2], closure = s[3];
  if (range + 0.3 * closure > 0.1) return 0;
  const bool left = bearing >= 0.0;
  const bool strong = std::abs(heading) < 0.5;
  if (left) return strong ? 3 : 1;
  return strong ? 4 : 2;
}

/// Uniform states in [-1, 1]^4 labelled by advisory_label.
inline Dataset advisory(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s = {u(rng), u(rng), u(rng), u(rng)};
    d.y.push_back(one_hot(advisory_label(s), 5));
    d.x.push_back(std::move(s));
  }
  return d;
}

/// y = slope * x + noise with x standard normal: a single-weight conjugate model.
inline Dataset linear(std::size_t n, double slope, double noise_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nx(0.0, 1.0), noise(0.0, noise_std);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = nx(rng);
    d.x.push_back({x});
    d.y.push_back({slope * x + noise(rng)});
  }
  return d;
}

}  // namespace data

enum class Likelihood { categorical, gaussian };

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double prior_variance = 1.0;
  Likelihood likelihood = Likelihood::categorical;
  double noise_variance = 1.0;  // gaussian likelihood only
  double kl_weight = 1.0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw DomainError("epochs and batch_size must be positive");
    if (!(learning_rate > 0.0 && prior_variance > 0.0 && noise_variance > 0.0 && kl_weight >= 0.0))
      throw DomainError("training hyperparameters must be positive");
  }
};

struct HmcConfig {
  std::size_t leapfrog_steps = 20;
  double step_size = 0.01;
  std::size_t num_samples = 100;
  std::size_t burn_in = 100;
  double prior_variance = 1.0;
  Likelihood likelihood = Likelihood::categorical;
  double noise_variance = 1.0;

  void validate() const {
    if (leapfrog_steps == 0 || num_samples == 0) throw DomainError("HMC needs positive step and sample counts");
    if (!(step_size > 0.0 && prior_variance > 0.0 && noise_variance > 0.0))
      throw DomainError("HMC hyperparameters must be positive");
  }
};

namespace detail {

struct LossGrad {
  double nll = 0.0;
  std::vector<double> dlogits;
};

/// Negative log-likelihood of one example and its gradient w.r.t. the logits.
inline LossGrad example_nll(std::span<const double> logits, std::span<const double> y, Likelihood lik,
                            double noise_variance) {
  require_shape(logits.size() == y.size(), "target width does not match the network output");
  LossGrad out{0.0, std::vector<double>(logits.size())};
  if (lik == Likelihood::categorical) {
    const auto p = softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.nll -= y[i] * std::log(std::max(p[i], 1e-300));
      out.dlogits[i] = p[i] - y[i];
    }
  } else {
    constexpr double kLog2Pi = 1.8378770664093453;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = logits[i] - y[i];
      out.nll += 0.5 * r * r / noise_variance + 0.5 * (kLog2Pi + std::log(noise_variance));
      out.dlogits[i] = r / noise_variance;
    }
  }
  return out;
}

/// Summed NLL over the given examples; accumulates the weight gradient into grad if given.
inline double batch_nll(const Network& net, std::span<const double> w, const Dataset& d,
                        std::span<const std::size_t> idx, Likelihood lik, double noise_variance,
                        std::vector<double>* grad) {
  double total = 0.0;
  for (std::size_t i : idx) {
    const auto trace = forward_trace(net, w, d.x[i]);
    auto lg = example_nll(trace.logits(), d.y[i], lik, noise_variance);
    total += lg.nll;
    if (grad) {
      const auto g = backward(net, w, trace, lg.dlogits, true).weights;
      for (std::size_t p = 0; p < g.size(); ++p) (*grad)[p] += g[p];
    }
  }
  return total;
}

inline double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }
inline double softplus_inverse(double v) { return v > 30.0 ? v : std::log(std::expm1(v)); }
inline double sigmoid(double r) { return 1.0 / (1.0 + std::exp(-r)); }

struct Adam {
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  Adam(std::size_t n, double rate) : lr(rate), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& g, double rate) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      params[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

/// KL(N(mu, v) || N(0, s2)) summed over coordinates.
inline double gaussian_kl(std::span<const double> mu, std::span<const double> v, double s2) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    kl += 0.5 * (v[i] / s2 + mu[i] * mu[i] / s2 - 1.0 - std::log(v[i] / s2));
  return kl;
}

}  // namespace detail

struct VIResult {
  GaussianPosterior posterior;
  std::vector<double> elbo_trace;  // per-epoch ELBO per example on the fixed evaluation objective
};

namespace detail {

/// ELBO per example with fixed noise draws on a fixed example subset, and its
/// gradient w.r.t. [mean | raw variance]. Deterministic in theta.
struct FixedElbo {
  const Network& net;
  const Dataset& d;
  const TrainConfig& cfg;
  std::vector<std::size_t> idx;
  std::vector<std::vector<double>> eps;

  double operator()(const std::vector<double>& theta, std::vector<double>* grad) const {
    const std::size_t P = net.num_params();
    const double n = static_cast<double>(d.size());
    const double scale = n / (static_cast<double>(idx.size()) * static_cast<double>(eps.size()));
    std::vector<double> mu(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(P)), var(P), sd(P), w(P), gw;
    for (std::size_t i = 0; i < P; ++i) {
      var[i] = softplus(theta[P + i]);
      sd[i] = std::sqrt(var[i]);
    }
    if (grad) grad->assign(2 * P, 0.0);
    double nll = 0.0;
    for (const auto& e : eps) {
      for (std::size_t i = 0; i < P; ++i) w[i] = mu[i] + sd[i] * e[i];
      if (grad) gw.assign(P, 0.0);
      nll += batch_nll(net, w, d, idx, cfg.likelihood, cfg.noise_variance, grad ? &gw : nullptr);
      if (grad)
        for (std::size_t i = 0; i < P; ++i) {
          (*grad)[i] += scale * gw[i];
          (*grad)[P + i] += scale * gw[i] * e[i] / (2.0 * sd[i]);
        }
    }
    const double s2 = cfg.prior_variance;
    if (grad)
      for (std::size_t i = 0; i < P; ++i) {
        (*grad)[i] = -((*grad)[i] + cfg.kl_weight * mu[i] / s2) / n;
        (*grad)[P + i] = -((*grad)[P + i] + cfg.kl_weight * 0.5 * (1.0 / s2 - 1.0 / var[i])) *
                         sigmoid(theta[P + i]) / n;
      }
    return -(scale * nll + cfg.kl_weight * gaussian_kl(mu, var, s2)) / n;
  }
};

}  // namespace detail

/// Mean-field Gaussian VI. Most epochs run Adam on a reparameterized one-sample
/// gradient with cosine learning-rate decay. The last tenth of the epochs ascend
/// the fixed-draw ELBO directly with a backtracking step, so the reported trace
/// is non-decreasing there. Variances are softplus of an unconstrained vector.
inline VIResult fit_vi(const Network& net, const Dataset& d, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (d.empty()) throw DomainError("training dataset is empty");
  detail::require_shape(d.x.size() == d.y.size(), "dataset inputs and targets differ in count");
  const std::size_t P = net.num_params();
  const double n = static_cast<double>(d.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> stdn(0.0, 1.0);

  std::vector<double> theta(2 * P);  // [mean | raw variance]
  for (std::size_t i = 0; i < P; ++i) theta[i] = 0.05 * stdn(rng);
  for (std::size_t i = 0; i < P; ++i) theta[P + i] = detail::softplus_inverse(0.05 * 0.05);

  // fixed evaluation subset and noise draws
  constexpr std::size_t kEvalDraws = 8;
  constexpr std::size_t kEvalExamples = 1024;
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eval_rng(derive_seed(seed, 0xE7A1ULL));
  std::shuffle(order.begin(), order.end(), eval_rng);
  detail::FixedElbo elbo{net, d, cfg, {}, {}};
  elbo.idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(d.size(), kEvalExamples)));
  elbo.eps.assign(kEvalDraws, std::vector<double>(P));
  for (auto& e : elbo.eps)
    for (double& v : e) v = stdn(eval_rng);

  const std::size_t polish_epochs = std::min(cfg.epochs, std::max<std::size_t>(1, (cfg.epochs + 9) / 10));
  const std::size_t sgd_epochs = cfg.epochs - polish_epochs;

  auto record = [&](std::size_t epoch, double e) {
    if (!std::isfinite(e))
      throw NumericError("VI training diverged (non-finite ELBO) at epoch " + std::to_string(epoch));
  };

  detail::Adam adam(2 * P, cfg.learning_rate);
  VIResult result;
  std::vector<double> w(P), eps(P), var(P), gw(P), g(2 * P);
  const std::size_t batches = (d.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(std::max<std::size_t>(1, sgd_epochs * batches));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sgd_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(d.size(), lo + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      for (std::size_t i = 0; i < P; ++i) {
        var[i] = detail::softplus(theta[P + i]);
        eps[i] = stdn(rng);
        w[i] = theta[i] + std::sqrt(var[i]) * eps[i];
      }
      std::fill(gw.begin(), gw.end(), 0.0);
      const double scale = n / static_cast<double>(idx.size());
      const double nll = scale * detail::batch_nll(net, w, d, idx, cfg.likelihood, cfg.noise_variance, &gw);
      if (!std::isfinite(nll))
        throw NumericError("VI training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      const double s2 = cfg.prior_variance;
      for (std::size_t i = 0; i < P; ++i) {
        const double dw = scale * gw[i];
        const double sd = std::sqrt(var[i]);
        g[i] = dw + cfg.kl_weight * theta[i] / s2;
        const double dvar = dw * eps[i] / (2.0 * sd) + cfg.kl_weight * 0.5 * (1.0 / s2 - 1.0 / var[i]);
        g[P + i] = dvar * detail::sigmoid(theta[P + i]);
      }
      for (double& v : g) v /= n;
      const double progress = static_cast<double>(step++) / total_steps;
      const double rate = cfg.learning_rate * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
      adam.step(theta, g, rate);
    }
    const double e = elbo(theta, nullptr);
    record(epoch, e);
    result.elbo_trace.push_back(e);
  }

  // deterministic ascent on the fixed-draw objective
  constexpr std::size_t kPolishSteps = 5;
  double eta = cfg.learning_rate;
  std::vector<double> grad, trial(2 * P);
  double current = elbo(theta, &grad);
  record(sgd_epochs, current);
  for (std::size_t epoch = sgd_epochs; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < kPolishSteps; ++s) {
      double g2 = 0.0;
      for (double v : grad) g2 += v * v;
      if (!(g2 > 0.0)) break;
      bool moved = false;
      for (int halvings = 0; halvings < 30 && !moved; ++halvings, eta *= 0.5) {
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = theta[i] + eta * grad[i];
        const double next = elbo(trial, nullptr);
        if (std::isfinite(next) && next >= current + 1e-4 * eta * g2) {
          theta = trial;
          current = elbo(theta, &grad);
          moved = true;
          eta *= 4.0;  // offsets the halving below, so a success grows the step 2x
        }
      }
      if (!moved) break;
    }
    record(epoch, current);
    result.elbo_trace.push_back(current);
  }

  std::vector<double> mean(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(P));
  for (std::size_t i = 0; i < P; ++i) var[i] = std::max(detail::softplus(theta[P + i]), 1e-300);
  result.posterior = GaussianPosterior(std::move(mean), var);
  return result;
}

struct HmcResult {
  SamplePosterior posterior;
  double acceptance_rate = 0.0;
  double max_energy_error = 0.0;  // largest |H(end) - H(start)| over all trajectories
  std::size_t nonfinite_trajectories = 0;
  std::optional<std::string> warning;
};

/// Hamiltonian Monte Carlo with identity mass matrix and an isotropic Gaussian prior.
inline HmcResult sample_hmc(const Network& net, const Dataset& d, const HmcConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::require_shape(d.x.size() == d.y.size(), "dataset inputs and targets differ in count");
  const std::size_t P = net.num_params();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> stdn(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);

  auto potential = [&](const std::vector<double>& w, std::vector<double>* grad) {
    if (grad) grad->assign(P, 0.0);
    double u = detail::batch_nll(net, w, d, all, cfg.likelihood, cfg.noise_variance, grad);
    for (std::size_t i = 0; i < P; ++i) {
      u += 0.5 * w[i] * w[i] / cfg.prior_variance;
      if (grad) (*grad)[i] += w[i] / cfg.prior_variance;
    }
    return u;
  };

  std::vector<double> w(P);
  for (double& v : w) v = 0.05 * stdn(rng);
  std::vector<double> grad;
  double u = potential(w, &grad);

  HmcResult result;
  std::vector<WeightVector> samples;
  std::size_t accepted = 0;
  const std::size_t total = cfg.burn_in + cfg.num_samples;
  std::vector<double> q, p(P), gq;
  for (std::size_t it = 0; it < total; ++it) {
    for (double& v : p) v = stdn(rng);
    double k0 = 0.0;
    for (double v : p) k0 += 0.5 * v * v;
    q = w;
    gq = grad;
    double uq = u;
    const double h = cfg.step_size;
    for (std::size_t s = 0; s < cfg.leapfrog_steps; ++s) {
      for (std::size_t i = 0; i < P; ++i) p[i] -= 0.5 * h * gq[i];
      for (std::size_t i = 0; i < P; ++i) q[i] += h * p[i];
      uq = potential(q, &gq);
      for (std::size_t i = 0; i < P; ++i) p[i] -= 0.5 * h * gq[i];
    }
    double k1 = 0.0;
    for (double v : p) k1 += 0.5 * v * v;
    const double dH = (uq + k1) - (u + k0);
    if (!std::isfinite(dH)) {
      ++result.nonfinite_trajectories;
    } else {
      result.max_energy_error = std::max(result.max_energy_error, std::abs(dH));
      if (dH <= 0.0 || unif(rng) < std::exp(-dH)) {
        w = q;
        grad = gq;
        u = uq;
        ++accepted;
      }
    }
    if (it >= cfg.burn_in) samples.push_back(w);
  }
  result.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  if (result.acceptance_rate < 0.1)
    result.warning = "low HMC acceptance rate " + std::to_string(result.acceptance_rate);
  result.posterior = SamplePosterior(std::move(samples));
  return result;
}

}  // namespace bnncert
