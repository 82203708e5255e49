#pragma once

// Sound lower/upper bounds on probabilistic robustness (P_safe) and on the
// posterior-predictive decision (D_safe), plus the decision rules built on them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bnncert/attack.hpp"
#include "bnncert/error.hpp"
#include "bnncert/net.hpp"
#include "bnncert/parallel.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/propagate.hpp"
#include "bnncert/spec.hpp"

namespace bnncert {

struct BonferroniDepths {
  std::size_t lower = 2;  // even
  std::size_t upper = 1;  // odd
};

struct CertifyConfig {
  std::size_t num_samples = 5;
  double gamma = 2.5;
  Method method = Method::lbp;
  MarginScale margin_scale = MarginScale::std_dev;
  std::optional<BonferroniDepths> bonferroni;  // off: overlapping boxes are dropped greedily
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Sample posteriors: take atoms 0..N-1 in order instead of drawing with replacement.
  bool enumerate_atoms = true;
  LbpOptions lbp;
  int attack_iterations = 25;
  int attack_restarts = 3;
};

enum class Property { psafe, dsafe };

inline std::string_view to_string(Property p) { return p == Property::psafe ? "psafe" : "dsafe"; }
inline std::string_view to_string(BoundDirection d) {
  return d == BoundDirection::lower ? "lower" : "upper";
}

struct Certificate {
  Property property = Property::psafe;
  BoundDirection direction = BoundDirection::lower;
  double value = 0.0;
  std::vector<double> per_class;      // D_safe classification: bound for every class
  std::optional<std::size_t> target;  // class / output index the value refers to
  double covered_mass = 0.0;          // posterior mass of the boxes that entered the bound
  std::size_t boxes_used = 0;         // boxes sampled
  std::size_t boxes_kept = 0;         // boxes certified (safe, unsafe) or used (D_safe)
  double wall_time = 0.0;             // seconds
  CertifyConfig config;
};

namespace task {
struct Classification {
  std::size_t cls = 0;
};
/// Regression bounds need a floor/ceiling on the output for the uncovered mass.
struct Regression {
  std::size_t index = 0;
  std::optional<double> floor;
  std::optional<double> ceiling;
};
}  // namespace task

using Task = std::variant<task::Classification, task::Regression>;

// ---------------------------------------------------------------------------
// Decision-layer bounds over a logit box

namespace detail {

/// 1 / (1 + sum_l exp(a_l)) without overflow in either tail.
inline double inverse_one_plus_sum_exp(const std::vector<double>& a) {
  if (a.empty()) return 1.0;
  const double m = *std::max_element(a.begin(), a.end());
  if (m == -std::numeric_limits<double>::infinity()) return 1.0;
  double s = 0.0;
  for (double v : a) s += std::exp(v - m);
  const double log_t = m + std::log(s);  // log sum_l exp(a_l)
  const double p = log_t > 0.0 ? std::exp(-log_t) / (1.0 + std::exp(-log_t)) : 1.0 / (1.0 + std::exp(log_t));
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace detail

/// Smallest softmax value of class c over the logit box [yL, yU].
inline double output_worst(std::span<const double> yL, std::span<const double> yU, std::size_t c) {
  detail::require_shape(yL.size() == yU.size() && c < yL.size(), "output_worst: bad shapes");
  std::vector<double> a;
  for (std::size_t l = 0; l < yL.size(); ++l)
    if (l != c) a.push_back(yU[l] - yL[c]);
  return detail::inverse_one_plus_sum_exp(a);
}

/// Largest softmax value of class c over the logit box [yL, yU].
inline double output_best(std::span<const double> yL, std::span<const double> yU, std::size_t c) {
  detail::require_shape(yL.size() == yU.size() && c < yL.size(), "output_best: bad shapes");
  std::vector<double> a;
  for (std::size_t l = 0; l < yL.size(); ++l)
    if (l != c) a.push_back(yL[l] - yU[c]);
  return detail::inverse_one_plus_sum_exp(a);
}

// ---------------------------------------------------------------------------
// Weight-box families

struct SampledBox {
  WeightVector center;
  WeightBox box;
};

/// The N candidate boxes, fixed by (posterior, seed); index i depends only on i.
inline std::vector<SampledBox> sample_boxes(const Posterior& p, const CertifyConfig& cfg) {
  std::size_t n = cfg.num_samples;
  const auto* atoms = std::get_if<SamplePosterior>(&p);
  const bool enumerate = atoms != nullptr && cfg.enumerate_atoms;
  if (enumerate) n = std::min(n, atoms->samples.size());
  std::vector<SampledBox> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    WeightVector w = enumerate ? atoms->samples[i] : sample(p, derive_seed(cfg.seed, i));
    out[i].box = make_box(w, cfg.gamma, p, cfg.margin_scale);
    out[i].center = std::move(w);
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> considered_indices(const std::vector<SampledBox>& boxes,
                                                   const CertifyConfig& cfg) {
  if (cfg.bonferroni) {
    std::vector<std::size_t> all(boxes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  std::vector<WeightBox> plain;
  plain.reserve(boxes.size());
  for (const auto& b : boxes) plain.push_back(b.box);
  return disjoint_indices(plain);
}

/// Posterior mass of the union of the selected boxes (exact sum when disjoint,
/// Bonferroni lower bound otherwise).
inline double union_mass_lower(const std::vector<SampledBox>& boxes,
                               const std::vector<std::size_t>& selected,
                               const std::vector<double>& masses, const Posterior& p,
                               const CertifyConfig& cfg) {
  if (!cfg.bonferroni) {
    double s = 0.0;
    for (std::size_t i : selected) s += masses[i];
    return std::clamp(s, 0.0, 1.0);
  }
  std::vector<WeightBox> list;
  for (std::size_t i : selected) list.push_back(boxes[i].box);
  return bonferroni_bounds(list, p, cfg.bonferroni->lower, cfg.bonferroni->upper).lower;
}

inline double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Probabilistic robustness

/// Posterior mass of boxes whose whole output box lies in S.
inline Certificate psafe_lower(const Network& net, const Posterior& p, const InputBox& T,
                               const OutputSpec& S, const CertifyConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  detail::require_shape(posterior_size(p) == net.num_params(), "posterior does not match network");
  const auto boxes = sample_boxes(p, cfg);
  const auto considered = detail::considered_indices(boxes, cfg);

  std::vector<char> safe(boxes.size(), 0);
  std::vector<double> masses(boxes.size(), 0.0);
  parallel_for(considered.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = considered[k];
    const auto y = propagate(cfg.method, net, T, boxes[i].box, cfg.lbp);
    safe[i] = contains(S, y.lower, y.upper) ? 1 : 0;
    masses[i] = box_mass(p, boxes[i].box);
  });

  std::vector<std::size_t> kept;
  for (std::size_t i : considered)
    if (safe[i]) kept.push_back(i);

  Certificate cert;
  cert.property = Property::psafe;
  cert.direction = BoundDirection::lower;
  cert.value = detail::union_mass_lower(boxes, kept, masses, p, cfg);
  cert.covered_mass = detail::union_mass_lower(boxes, considered, masses, p, cfg);
  cert.boxes_used = boxes.size();
  cert.boxes_kept = kept.size();
  cert.config = cfg;
  cert.wall_time = detail::elapsed(start);
  return cert;
}

/// 1 minus the posterior mass of boxes certified to violate S at an attack point.
inline Certificate psafe_upper(const Network& net, const Posterior& p, const InputBox& T,
                               const OutputSpec& S, const CertifyConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  detail::require_shape(posterior_size(p) == net.num_params(), "posterior does not match network");
  const auto boxes = sample_boxes(p, cfg);
  const auto considered = detail::considered_indices(boxes, cfg);

  std::vector<char> unsafe(boxes.size(), 0);
  std::vector<double> masses(boxes.size(), 0.0);
  parallel_for(considered.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = considered[k];
    AttackConfig acfg;
    acfg.iterations = cfg.attack_iterations;
    acfg.restarts = cfg.attack_restarts;
    acfg.seed = derive_seed(cfg.seed ^ 0xA77AC4ULL, i);
    acfg.objective = objective::SpecViolation{S};
    const auto adv = pgd(net, boxes[i].center, T, acfg);
    const auto y = propagate(cfg.method, net, InputBox::point(adv.x), boxes[i].box, cfg.lbp);
    unsafe[i] = excludes(S, y.lower, y.upper) ? 1 : 0;
    masses[i] = box_mass(p, boxes[i].box);
  });

  std::vector<std::size_t> kept;
  for (std::size_t i : considered)
    if (unsafe[i]) kept.push_back(i);

  Certificate cert;
  cert.property = Property::psafe;
  cert.direction = BoundDirection::upper;
  cert.value = std::clamp(1.0 - detail::union_mass_lower(boxes, kept, masses, p, cfg), 0.0, 1.0);
  cert.covered_mass = detail::union_mass_lower(boxes, considered, masses, p, cfg);
  cert.boxes_used = boxes.size();
  cert.boxes_kept = kept.size();
  cert.config = cfg;
  cert.wall_time = detail::elapsed(start);
  return cert;
}

// ---------------------------------------------------------------------------
// Decision robustness

/// Output box and posterior mass of every considered weight box.
struct BoxOutput {
  std::vector<double> lower;
  std::vector<double> upper;
  double mass = 0.0;
  WeightBox box;
};

struct BoxFamily {
  std::vector<BoxOutput> outputs;  // considered boxes only, in sample order
  std::size_t sampled = 0;
};

inline BoxFamily propagate_family(const Network& net, const Posterior& p, const InputBox& T,
                                  const CertifyConfig& cfg) {
  detail::require_shape(posterior_size(p) == net.num_params(), "posterior does not match network");
  const auto boxes = sample_boxes(p, cfg);
  const auto considered = detail::considered_indices(boxes, cfg);
  BoxFamily fam;
  fam.sampled = boxes.size();
  fam.outputs.resize(considered.size());
  parallel_for(considered.size(), cfg.threads, [&](std::size_t k) {
    const auto& b = boxes[considered[k]];
    auto y = propagate(cfg.method, net, T, b.box, cfg.lbp);
    fam.outputs[k] = {std::move(y.lower), std::move(y.upper), box_mass(p, b.box), b.box};
  });
  return fam;
}

namespace detail {

/// E[g] bound from per-box bounds psi_i on g, with `fill` for the uncovered mass.
/// Disjoint boxes: sum_i P_i psi_i + fill (1 - sum_i P_i).
/// Overlapping boxes (lower): g >= max{psi_i : w in J_i}; layer-cake over the
/// sorted psi values with Bonferroni lower bounds on each union. Upper mirrored.
inline double expectation_bound(const BoxFamily& fam, const std::vector<double>& psi, double fill,
                                bool lower, const Posterior& p, const CertifyConfig& cfg) {
  if (!cfg.bonferroni) {
    double acc = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
      acc += fam.outputs[i].mass * psi[i];
      mass += fam.outputs[i].mass;
    }
    return acc + fill * (1.0 - std::min(mass, 1.0));
  }
  std::set<double> levels;
  for (double v : psi) levels.insert(lower ? std::max(v, fill) : std::min(v, fill));
  double acc = fill;
  double prev = fill;
  auto level_union = [&](double level) {
    std::vector<WeightBox> list;
    for (std::size_t i = 0; i < psi.size(); ++i) {
      const double v = lower ? std::max(psi[i], fill) : std::min(psi[i], fill);
      if (lower ? v >= level : v <= level) list.push_back(fam.outputs[i].box);
    }
    return bonferroni_bounds(list, p, cfg.bonferroni->lower, cfg.bonferroni->upper).lower;
  };
  if (lower) {
    for (double level : levels) {  // ascending
      acc += (level - prev) * level_union(level);
      prev = level;
    }
  } else {
    for (auto it = levels.rbegin(); it != levels.rend(); ++it) {  // descending
      acc -= (prev - *it) * level_union(*it);
      prev = *it;
    }
  }
  return acc;
}

inline double covered(const BoxFamily& fam, const Posterior& p, const CertifyConfig& cfg) {
  if (!cfg.bonferroni) {
    double m = 0.0;
    for (const auto& o : fam.outputs) m += o.mass;
    return std::clamp(m, 0.0, 1.0);
  }
  std::vector<WeightBox> list;
  for (const auto& o : fam.outputs) list.push_back(o.box);
  return bonferroni_bounds(list, p, cfg.bonferroni->lower, cfg.bonferroni->upper).lower;
}

}  // namespace detail

/// Per-class lower and upper bounds on the softmax predictive mean over T.
struct DecisionBounds {
  std::vector<double> lower;
  std::vector<double> upper;
  double covered_mass = 0.0;
  std::size_t boxes_used = 0;
  std::size_t boxes_kept = 0;
};

inline DecisionBounds decision_bounds(const BoxFamily& fam, std::size_t n_classes,
                                      const Posterior& p, const CertifyConfig& cfg) {
  DecisionBounds db;
  db.lower.resize(n_classes);
  db.upper.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> worst(fam.outputs.size()), best(fam.outputs.size());
    for (std::size_t i = 0; i < fam.outputs.size(); ++i) {
      worst[i] = output_worst(fam.outputs[i].lower, fam.outputs[i].upper, c);
      best[i] = output_best(fam.outputs[i].lower, fam.outputs[i].upper, c);
    }
    db.lower[c] = std::clamp(detail::expectation_bound(fam, worst, 0.0, true, p, cfg), 0.0, 1.0);
    db.upper[c] = std::clamp(detail::expectation_bound(fam, best, 1.0, false, p, cfg), 0.0, 1.0);
  }
  db.covered_mass = detail::covered(fam, p, cfg);
  db.boxes_used = fam.sampled;
  db.boxes_kept = fam.outputs.size();
  return db;
}

inline DecisionBounds decision_bounds(const Network& net, const Posterior& p, const InputBox& T,
                                      const CertifyConfig& cfg) {
  return decision_bounds(propagate_family(net, p, T, cfg), net.output_dim(), p, cfg);
}

namespace detail {

inline Certificate dsafe_certificate(const Network& net, const Posterior& p, const InputBox& T,
                                     const CertifyConfig& cfg, const Task& t, BoundDirection dir) {
  const auto start = std::chrono::steady_clock::now();
  const bool lower = dir == BoundDirection::lower;
  Certificate cert;
  cert.property = Property::dsafe;
  cert.direction = dir;
  cert.config = cfg;
  if (const auto* reg = std::get_if<task::Regression>(&t)) {
    const auto& bound = lower ? reg->floor : reg->ceiling;
    if (!bound)
      throw DomainError(lower ? "regression D_safe lower bound needs an output floor"
                              : "regression D_safe upper bound needs an output ceiling");
    require_shape(reg->index < net.output_dim(), "regression output index out of range");
    const auto fam = propagate_family(net, p, T, cfg);
    std::vector<double> psi(fam.outputs.size());
    for (std::size_t i = 0; i < psi.size(); ++i)
      psi[i] = lower ? std::max(fam.outputs[i].lower[reg->index], *bound)
                     : std::min(fam.outputs[i].upper[reg->index], *bound);
    cert.value = expectation_bound(fam, psi, *bound, lower, p, cfg);
    cert.target = reg->index;
    cert.covered_mass = covered(fam, p, cfg);
    cert.boxes_used = fam.sampled;
    cert.boxes_kept = fam.outputs.size();
  } else {
    const auto cls = std::get<task::Classification>(t).cls;
    require_shape(cls < net.output_dim(), "class index out of range");
    const auto db = decision_bounds(net, p, T, cfg);
    cert.per_class = lower ? db.lower : db.upper;
    cert.value = cert.per_class[cls];
    cert.target = cls;
    cert.covered_mass = db.covered_mass;
    cert.boxes_used = db.boxes_used;
    cert.boxes_kept = db.boxes_kept;
  }
  cert.wall_time = elapsed(start);
  return cert;
}

}  // namespace detail

inline Certificate dsafe_lower(const Network& net, const Posterior& p, const InputBox& T,
                               const CertifyConfig& cfg, const Task& t) {
  return detail::dsafe_certificate(net, p, T, cfg, t, BoundDirection::lower);
}

inline Certificate dsafe_upper(const Network& net, const Posterior& p, const InputBox& T,
                               const CertifyConfig& cfg, const Task& t) {
  return detail::dsafe_certificate(net, p, T, cfg, t, BoundDirection::upper);
}

// ---------------------------------------------------------------------------
// Decision rules

enum class Verdict { certified_robust, certified_wrong, certified_uncertain, unknown };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::certified_robust: return "certified-robust";
    case Verdict::certified_wrong: return "certified-wrong";
    case Verdict::certified_uncertain: return "certified-uncertain";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

/// Argmax decision from per-class bounds; strict inequalities, ties are unknown.
inline Verdict classify_decision(std::span<const double> lower, std::span<const double> upper,
                                 std::size_t true_class,
                                 std::optional<double> tau_uncertain = std::nullopt) {
  detail::require_shape(lower.size() == upper.size() && true_class < lower.size(),
                        "decision bounds have inconsistent shapes");
  const std::size_t n = lower.size();
  double max_other_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != true_class) max_other_upper = std::max(max_other_upper, upper[j]);
  if (lower[true_class] > max_other_upper || lower[true_class] > 0.5) return Verdict::certified_robust;
  for (std::size_t j = 0; j < n; ++j)
    if (j != true_class && lower[j] > upper[true_class]) return Verdict::certified_wrong;
  if (tau_uncertain && std::all_of(upper.begin(), upper.end(), [&](double u) { return u < *tau_uncertain; }))
    return Verdict::certified_uncertain;
  return Verdict::unknown;
}

inline Verdict decision_robust(const Network& net, const Posterior& p, const InputBox& T,
                               std::size_t true_class, const CertifyConfig& cfg,
                               std::optional<double> tau_uncertain = std::nullopt) {
  const auto db = decision_bounds(net, p, T, cfg);
  return classify_decision(db.lower, db.upper, true_class, tau_uncertain);
}

/// True iff every class's D_safe upper bound is below tau.
inline bool uncertainty_check(std::span<const double> upper, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau_uncertain must lie in (0, 1)");
  return std::all_of(upper.begin(), upper.end(), [tau](double u) { return u < tau; });
}

inline bool uncertainty_check(const Network& net, const Posterior& p, const InputBox& T,
                              double tau, const CertifyConfig& cfg) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau_uncertain must lie in (0, 1)");
  return uncertainty_check(decision_bounds(net, p, T, cfg).upper, tau);
}

struct MedianInput {
  double lower = 0.0;  // output lower bound over the box
  double upper = 0.0;  // output upper bound over the box
  double mass = 0.0;   // posterior mass of the (disjoint) box
};

struct MedianBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Bounds on the median of the predictive distribution (l1 decision loss).
/// Uncovered mass eta is placed at -inf for the lower bound and +inf for the upper.
inline MedianBounds median_bounds(std::vector<MedianInput> boxes) {
  double captured = 0.0;
  for (const auto& b : boxes) captured += b.mass;
  const double eta = std::max(0.0, 1.0 - captured);
  if (boxes.empty() || captured <= 0.5)
    throw DomainError("captured posterior mass <= 0.5: the median is unbounded by this family");

  MedianBounds out;
  std::sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.lower < b.lower; });
  double cum = eta;
  out.lower = boxes.back().lower;
  for (const auto& b : boxes) {
    cum += b.mass;
    if (cum >= 0.5) {
      out.lower = b.lower;
      break;
    }
  }
  std::sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.upper > b.upper; });
  cum = eta;
  out.upper = boxes.back().upper;
  for (const auto& b : boxes) {
    cum += b.mass;
    if (cum >= 0.5) {
      out.upper = b.upper;
      break;
    }
  }
  return out;
}

inline MedianBounds median_bounds(const Network& net, const Posterior& p, const InputBox& T,
                                  const CertifyConfig& cfg, std::size_t index) {
  detail::require_shape(index < net.output_dim(), "output index out of range");
  const auto fam = propagate_family(net, p, T, cfg);
  std::vector<MedianInput> in;
  for (const auto& o : fam.outputs) in.push_back({o.lower[index], o.upper[index], o.mass});
  return median_bounds(std::move(in));
}

/// Certified class under the K-0 loss: lower bound of class i >= K_i / sum K.
inline std::optional<std::size_t> k0_decision_check(std::span<const double> lower,
                                                     std::span<const double> penalties) {
  detail::require_shape(lower.size() == penalties.size(), "one penalty per class required");
  double total = 0.0;
  for (double k : penalties) {
    if (!(k > 0.0)) throw DomainError("K-0 penalties must be positive");
    total += k;
  }
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] >= penalties[i] / total) {
      if (found) throw DomainError("several classes clear their K-0 thresholds; penalties are inconsistent");
      found = i;
    }
  }
  return found;
}

}  // namespace bnncert
