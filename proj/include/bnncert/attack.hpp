#pragma once

// Projected gradient (sign) attacks on fixed-weight networks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "bnncert/net.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/spec.hpp"

namespace bnncert {

namespace objective {

/// Maximise cross-entropy of the true class.
struct Untargeted {
  std::size_t true_class = 0;
};
/// Minimise the softmax probability of a class (maximise its negative).
struct MinimizeProbability {
  std::size_t cls = 0;
};
/// Maximise the softmax probability of a class.
struct MaximizeProbability {
  std::size_t cls = 0;
};
/// Drive the output out of a safe polytope: maximise -min_j (C y + d)_j.
struct SpecViolation {
  OutputSpec spec;
};
/// Maximise (or minimise) one raw output.
struct OutputExtreme {
  std::size_t index = 0;
  bool maximize = true;
};
/// Maximise |y_index - reference|.
struct Deviation {
  std::size_t index = 0;
  double reference = 0.0;
};

}  // namespace objective

/// A loss to be maximised by the attack.
using Objective = std::variant<objective::Untargeted, objective::MinimizeProbability,
                               objective::MaximizeProbability, objective::SpecViolation,
                               objective::OutputExtreme, objective::Deviation>;

struct AttackConfig {
  int iterations = 25;
  std::optional<double> step_size;  // default: 2.5 * width / iterations per dimension
  int restarts = 3;
  std::uint64_t seed = 0;
  Objective objective = objective::Untargeted{};
};

struct AttackResult {
  std::vector<double> x;
  double loss = -std::numeric_limits<double>::infinity();
};

namespace detail {

struct LossAndGrad {
  double loss;
  std::vector<double> dlogits;
};

inline LossAndGrad objective_loss(const Objective& obj, std::span<const double> y) {
  const std::size_t n = y.size();
  LossAndGrad out{0.0, std::vector<double>(n, 0.0)};
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, objective::Untargeted>) {
          const auto p = softmax(y);
          out.loss = -std::log(std::max(p[o.true_class], 1e-300));
          for (std::size_t l = 0; l < n; ++l) out.dlogits[l] = p[l] - (l == o.true_class ? 1.0 : 0.0);
        } else if constexpr (std::is_same_v<T, objective::MinimizeProbability> ||
                             std::is_same_v<T, objective::MaximizeProbability>) {
          const double sign = std::is_same_v<T, objective::MinimizeProbability> ? -1.0 : 1.0;
          const auto p = softmax(y);
          out.loss = sign * p[o.cls];
          for (std::size_t l = 0; l < n; ++l)
            out.dlogits[l] = sign * p[o.cls] * ((l == o.cls ? 1.0 : 0.0) - p[l]);
        } else if constexpr (std::is_same_v<T, objective::SpecViolation>) {
          const auto rows = o.spec.row_values(y);
          const std::size_t j = static_cast<std::size_t>(
              std::min_element(rows.begin(), rows.end()) - rows.begin());
          out.loss = -rows[j];
          for (std::size_t l = 0; l < n; ++l) out.dlogits[l] = -o.spec.C()[j][l];
        } else if constexpr (std::is_same_v<T, objective::OutputExtreme>) {
          const double sign = o.maximize ? 1.0 : -1.0;
          out.loss = sign * y[o.index];
          out.dlogits[o.index] = sign;
        } else {
          const double diff = y[o.index] - o.reference;
          out.loss = std::abs(diff);
          out.dlogits[o.index] = diff >= 0.0 ? 1.0 : -1.0;
        }
      },
      obj);
  return out;
}

}  // namespace detail

/// Objective value at x for a fixed weight vector.
inline double objective_value(const Network& net, std::span<const double> w,
                              std::span<const double> x, const Objective& obj) {
  const auto y = forward(net, w, x);
  return detail::objective_loss(obj, y).loss;
}

/// Gradient of the objective with respect to the input.
inline std::vector<double> grad(const Network& net, std::span<const double> w,
                                std::span<const double> x, const Objective& obj) {
  const auto trace = forward_trace(net, w, x);
  const auto lg = detail::objective_loss(obj, trace.logits());
  return backward(net, w, trace, lg.dlogits, false).input;
}

/// PGD on the objective averaged over a set of weight vectors (an ensemble).
inline AttackResult pgd(const Network& net, const std::vector<WeightVector>& weights,
                        const InputBox& T, const AttackConfig& cfg) {
  detail::require_domain(cfg.iterations >= 1, "attack needs at least one iteration");
  detail::require_domain(!weights.empty(), "attack needs at least one weight vector");
  net.check_input(T.lower());
  const std::size_t n = T.dim();

  auto evaluate = [&](const std::vector<double>& x, std::vector<double>* g) {
    double loss = 0.0;
    if (g) g->assign(n, 0.0);
    for (const auto& w : weights) {
      const auto trace = forward_trace(net, w, x);
      const auto lg = detail::objective_loss(cfg.objective, trace.logits());
      loss += lg.loss;
      if (g) {
        const auto gx = backward(net, w, trace, lg.dlogits, false).input;
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += gx[i];
      }
    }
    return loss / static_cast<double>(weights.size());
  };

  std::vector<double> step(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double width = T.upper()[i] - T.lower()[i];
    step[i] = cfg.step_size ? *cfg.step_size : 2.5 * width / cfg.iterations;
  }

  AttackResult best{T.center(), -std::numeric_limits<double>::infinity()};
  best.loss = evaluate(best.x, nullptr);
  const int restarts = std::max(cfg.restarts, 1);
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> x = T.center();
    if (r > 0) {
      std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      for (std::size_t i = 0; i < n; ++i) {
        std::uniform_real_distribution<double> u(T.lower()[i], T.upper()[i]);
        x[i] = T.lower()[i] == T.upper()[i] ? T.lower()[i] : u(rng);
      }
    }
    std::vector<double> g;
    for (int it = 0; it <= cfg.iterations; ++it) {
      const double loss = evaluate(x, it < cfg.iterations ? &g : nullptr);
      if (std::isfinite(loss) && loss > best.loss) best = {x, loss};
      if (it == cfg.iterations) break;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        x[i] = std::clamp(x[i] + step[i] * s, T.lower()[i], T.upper()[i]);
      }
    }
  }
  return best;
}

inline AttackResult pgd(const Network& net, const WeightVector& w, const InputBox& T,
                        const AttackConfig& cfg) {
  return pgd(net, std::vector<WeightVector>{w}, T, cfg);
}

}  // namespace bnncert
