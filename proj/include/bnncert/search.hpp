#pragma once

// Linear epsilon search for the largest certified-robust radius (MaxRR) and the
// smallest certified-unrobust radius (MinUR).

#include <cmath>
#include <cstddef>
#include <span>

#include "bnncert/certify.hpp"
#include "bnncert/error.hpp"
#include "bnncert/spec.hpp"

namespace bnncert {

struct RadiusSearchConfig {
  double tau_safe = 0.7;
  double tau_unsafe = 0.7;
  double eps_start_safe = 0.0;
  double eps_start_unsafe = 0.5;
  double step = 0.01;
  double eps_cap = 1.0;
  std::optional<ClipRange> clip;

  void validate() const {
    if (!(tau_safe > 0.0 && tau_safe <= 1.0)) throw DomainError("tau_safe must lie in (0, 1]");
    if (!(tau_unsafe >= 0.0 && tau_unsafe < 1.0)) throw DomainError("tau_unsafe must lie in [0, 1)");
    if (!(step > 0.0)) throw DomainError("radius step must be positive");
    if (!(eps_start_safe >= 0.0 && eps_start_unsafe >= 0.0))
      throw DomainError("radius search must start at a non-negative epsilon");
    if (!(eps_cap >= eps_start_safe && eps_cap >= eps_start_unsafe))
      throw DomainError("eps_cap must be at least the start radii");
  }
};

struct UnrobustRadius {
  double radius = 0.0;
  bool vacuous = false;  // never certified unrobust up to eps_cap
};

namespace detail {

/// k-th grid point start + k*step; the grid stops at the last point <= cap.
inline std::size_t grid_points(double start, double step, double cap) {
  return static_cast<std::size_t>(std::floor((cap - start) / step + 1e-9)) + 1;
}

}  // namespace detail

/// Largest grid radius whose P_safe lower bound exceeds tau_safe, walking up from
/// eps_start_safe and stopping at the first failure; 0 when the first check fails.
inline double max_robust_radius(const Network& net, const Posterior& p, std::span<const double> x,
                                const OutputSpec& S, const CertifyConfig& cfg,
                                const RadiusSearchConfig& rcfg) {
  rcfg.validate();
  const std::size_t n = detail::grid_points(rcfg.eps_start_safe, rcfg.step, rcfg.eps_cap);
  double best = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double eps = rcfg.eps_start_safe + static_cast<double>(k) * rcfg.step;
    const auto cert = psafe_lower(net, p, linf_ball(x, eps, rcfg.clip), S, cfg);
    if (!(cert.value > rcfg.tau_safe)) break;
    best = eps;
  }
  return best;
}

/// Smallest grid radius whose P_safe upper bound is below tau_unsafe. Starting at
/// eps_start_unsafe: if it certifies, walk down while it still certifies; otherwise
/// walk up to eps_cap until it does. Returns eps_cap flagged vacuous if never certified.
inline UnrobustRadius min_unrobust_radius(const Network& net, const Posterior& p,
                                          std::span<const double> x, const OutputSpec& S,
                                          const CertifyConfig& cfg, const RadiusSearchConfig& rcfg) {
  rcfg.validate();
  auto certified_at = [&](double eps) {
    return psafe_upper(net, p, linf_ball(x, eps, rcfg.clip), S, cfg).value < rcfg.tau_unsafe;
  };
  const double start = rcfg.eps_start_unsafe;
  if (certified_at(start)) {
    double best = start;
    // grid points below start: start - k*step >= 0
    const std::size_t below = detail::grid_points(0.0, rcfg.step, start) - 1;
    for (std::size_t k = 1; k <= below; ++k) {
      const double eps = start - static_cast<double>(k) * rcfg.step;
      if (!certified_at(eps)) break;
      best = eps;
    }
    return {best, false};
  }
  const std::size_t n = detail::grid_points(start, rcfg.step, rcfg.eps_cap);
  for (std::size_t k = 1; k < n; ++k) {
    const double eps = start + static_cast<double>(k) * rcfg.step;
    if (certified_at(eps)) return {eps, false};
  }
  return {rcfg.eps_cap, true};
}

}  // namespace bnncert
