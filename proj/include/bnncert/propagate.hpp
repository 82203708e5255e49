#pragma once

// Output boxes that hold jointly for every input in an input box T and every
// weight vector in a weight box R.
//
//  * ibp_forward: interval arithmetic, each monomial W_ij z_j bounded by the
//    four corner products of its rectangle.
//  * lbp_forward: linear bounding functions in (x, W) propagated layer by layer
//    through activation relaxations and McCormick envelopes of W_ij z_j.
//
// Floating-point sums are widened outward by a small relative pad so that the
// returned boxes also contain the values computed by `forward`.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bnncert/error.hpp"
#include "bnncert/net.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/spec.hpp"

namespace bnncert {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Range of the product a * b over the rectangle a x b.
inline Interval corner_product(Interval a, Interval b) {
  const std::array<double, 4> c = {a.lo * b.lo, a.hi * b.lo, a.lo * b.hi, a.hi * b.hi};
  return {*std::min_element(c.begin(), c.end()), *std::max_element(c.begin(), c.end())};
}

struct OutputBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

enum class Method { ibp, lbp };

inline std::string_view to_string(Method m) { return m == Method::ibp ? "ibp" : "lbp"; }

inline Method method_from_string(std::string_view s) {
  if (s == "ibp") return Method::ibp;
  if (s == "lbp") return Method::lbp;
  throw DomainError("unknown propagation method '" + std::string(s) + "'");
}

namespace detail {

// relative widening applied to every bound computed from a floating-point sum
inline constexpr double kRoundingPad = 1e-12;

inline void check_boxes(const Network& net, const InputBox& T, const WeightBox& R) {
  require_shape(T.dim() == net.input_dim(), "input box has dimension " + std::to_string(T.dim()) +
                                                ", layer 0 expects " + std::to_string(net.input_dim()));
  require_shape(R.size() == net.num_params(), "weight box has " + std::to_string(R.size()) +
                                                  " entries, network has " +
                                                  std::to_string(net.num_params()));
}

inline Interval activate_interval(ActivationKind kind, Interval z) {
  return {activate(kind, z.lo), activate(kind, z.hi)};
}

}  // namespace detail

/// Pre-activation intervals of every layer (the last entry bounds the logits).
inline std::vector<std::vector<Interval>> ibp_layers(const Network& net, const InputBox& T,
                                                     const WeightBox& R) {
  detail::check_boxes(net, T, R);
  std::vector<Interval> z(T.dim());
  for (std::size_t j = 0; j < T.dim(); ++j) z[j] = {T.lower()[j], T.upper()[j]};

  std::vector<std::vector<Interval>> pre;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& spec = net.layer(k);
    const auto lo = net.params(R.lower, k);
    const auto hi = net.params(R.upper, k);
    std::vector<Interval> zeta(spec.rows);
    for (std::size_t i = 0; i < spec.rows; ++i) {
      double sum_lo = 0.0, sum_hi = 0.0, mag = 0.0;
      for (std::size_t j = 0; j < spec.cols; ++j) {
        const Interval w{lo.w(i, j, spec.cols), hi.w(i, j, spec.cols)};
        const Interval t = corner_product(w, z[j]);
        sum_lo += t.lo;
        sum_hi += t.hi;
        mag += std::max(std::abs(t.lo), std::abs(t.hi));
      }
      const double blo = lo.b(i), bhi = hi.b(i);
      mag += std::max(std::abs(blo), std::abs(bhi));
      const double pad = detail::kRoundingPad * mag;
      zeta[i] = {sum_lo + blo - pad, sum_hi + bhi + pad};
    }
    if (k + 1 < net.num_layers()) {
      z.resize(spec.rows);
      for (std::size_t i = 0; i < spec.rows; ++i) z[i] = detail::activate_interval(spec.activation, zeta[i]);
    }
    pre.push_back(std::move(zeta));
  }
  return pre;
}

inline OutputBounds ibp_forward(const Network& net, const InputBox& T, const WeightBox& R) {
  const auto pre = ibp_layers(net, T, R);
  OutputBounds out;
  for (const auto& iv : pre.back()) {
    out.lower.push_back(iv.lo);
    out.upper.push_back(iv.hi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activation relaxations

/// alpha_l z + beta_l <= sigma(z) <= alpha_u z + beta_u on [zl, zu].
struct ActivationRelaxation {
  double alpha_l = 1.0;
  double beta_l = 0.0;
  double alpha_u = 1.0;
  double beta_u = 0.0;
};

namespace detail {

inline double tanh_slope(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

/// Upper line for tanh on [zl, zu]. Returns (alpha, beta).
inline std::pair<double, double> tanh_upper(double zl, double zu) {
  if (zl == zu) {
    const double a = tanh_slope(zl);
    return {a, std::tanh(zl) - a * zl};
  }
  const double tl = std::tanh(zl), tu = std::tanh(zu);
  const double chord = (tu - tl) / (zu - zl);
  if (zu <= 0.0) return {chord, tl - chord * zl};  // convex: chord lies above
  if (zl >= 0.0) {                                 // concave: tangent lies above
    const double d = 0.5 * (zl + zu);
    const double a = tanh_slope(d);
    return {a, std::tanh(d) - a * d};
  }
  // Mixed sign. gap(d) = tangent at d evaluated at zl, minus tanh(zl).
  auto gap = [&](double d) { return std::tanh(d) + tanh_slope(d) * (zl - d) - tl; };
  if (gap(zu) <= 0.0) return {chord, tl - chord * zl};
  // Any tangent point at or beyond the root of gap is a valid upper bound,
  // so bisection keeps the right end of the bracket.
  double lo = 0.0, hi = zu;
  for (int it = 0; it < 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gap(mid) >= 0.0) hi = mid; else lo = mid;
  }
  const double a = tanh_slope(hi);
  const double b = std::tanh(hi) - a * hi;
  if (!std::isfinite(a) || !std::isfinite(b)) return {0.0, tu};
  return {a, b};
}

}  // namespace detail

inline ActivationRelaxation relax_activation(ActivationKind kind, double zl, double zu) {
  if (!(zl <= zu)) throw DomainError("relax_activation: lower bound exceeds upper bound");
  ActivationRelaxation r;
  switch (kind) {
    case ActivationKind::identity:
      return r;
    case ActivationKind::relu: {
      if (zl >= 0.0) return r;
      if (zu <= 0.0) return {0.0, 0.0, 0.0, 0.0};
      r.alpha_u = zu / (zu - zl);
      r.beta_u = -r.alpha_u * zl + detail::kRoundingPad * zu;
      r.alpha_l = std::abs(zu) >= std::abs(zl) ? 1.0 : 0.0;
      r.beta_l = 0.0;
      return r;
    }
    case ActivationKind::tanh: {
      const auto [au, bu] = detail::tanh_upper(zl, zu);
      const auto [al_m, bl_m] = detail::tanh_upper(-zu, -zl);  // odd symmetry
      const double pad = detail::kRoundingPad * (1.0 + std::max(std::abs(zl), std::abs(zu)));
      r.alpha_u = au;
      r.beta_u = bu + pad;
      r.alpha_l = al_m;
      r.beta_l = -bl_m - pad;
      return r;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Linear bound propagation

enum class BoundDirection { lower, upper };

/// mu . x + <nu, W> + lambda, with nu indexed by the flat weight vector
/// (bias slots stay zero: biases enter through their interval end points).
/// Only a prefix of nu is stored; later layers' weights have zero coefficient.
struct LinearBound {
  std::vector<double> mu;
  std::vector<double> nu;
  double lambda = 0.0;
  BoundDirection direction = BoundDirection::lower;
  double mag = 0.0;  // magnitude of the accumulated terms, drives the rounding pad

  double eval(std::span<const double> x, std::span<const double> w) const {
    double acc = lambda;
    for (std::size_t j = 0; j < mu.size(); ++j) acc += mu[j] * x[j];
    for (std::size_t p = 0; p < nu.size(); ++p) acc += nu[p] * w[p];
    return acc;
  }
};

struct LbpOptions {
  // intersect intermediate (and final) bounds with the IBP intervals
  bool intersect_ibp = true;
};

namespace detail {

struct Extremum {
  double value;
  double scale;  // max over the box of sum |coef * var| + |lambda| + mag
};

/// min (lower) or max (upper) of the linear function over T x R, padded outward.
inline Extremum optimise(const LinearBound& f, const InputBox& T, const WeightBox& R, bool minimise) {
  double acc = f.lambda;
  double abs_sum = std::abs(f.lambda);
  for (std::size_t j = 0; j < f.mu.size(); ++j) {
    const double c = f.mu[j];
    const double v = (c >= 0.0) == minimise ? T.lower()[j] : T.upper()[j];
    acc += c * v;
    abs_sum += std::abs(c) * std::max(std::abs(T.lower()[j]), std::abs(T.upper()[j]));
  }
  for (std::size_t p = 0; p < f.nu.size(); ++p) {
    const double c = f.nu[p];
    if (c == 0.0) continue;
    const double v = (c >= 0.0) == minimise ? R.lower[p] : R.upper[p];
    acc += c * v;
    abs_sum += std::abs(c) * std::max(std::abs(R.lower[p]), std::abs(R.upper[p]));
  }
  const double scale = abs_sum + f.mag;
  const double pad = kRoundingPad * scale;
  return {minimise ? acc - pad : acc + pad, scale};
}

/// dst += alpha * src over the common prefix, growing dst if needed.
inline void axpy(std::vector<double>& dst, double alpha, const std::vector<double>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), 0.0);
  for (std::size_t p = 0; p < src.size(); ++p) dst[p] += alpha * src[p];
}

/// alpha * f + beta as a bound in the requested direction, given both bounds of f.
inline LinearBound scale_bound(double alpha, double beta, const LinearBound& lower,
                               const LinearBound& upper, double scale_lower, double scale_upper,
                               BoundDirection dir) {
  const bool want_lower = dir == BoundDirection::lower;
  const LinearBound& src = (alpha >= 0.0) == want_lower ? lower : upper;
  const double src_scale = (alpha >= 0.0) == want_lower ? scale_lower : scale_upper;
  LinearBound out;
  out.direction = dir;
  out.mu.resize(src.mu.size());
  for (std::size_t j = 0; j < src.mu.size(); ++j) out.mu[j] = alpha * src.mu[j];
  out.nu.resize(src.nu.size());
  for (std::size_t p = 0; p < src.nu.size(); ++p) out.nu[p] = alpha * src.nu[p];
  out.lambda = alpha * src.lambda + beta;
  out.mag = std::abs(alpha) * src_scale + std::abs(beta);
  return out;
}

inline Interval tighten(Interval lbp, Interval ibp) {
  Interval out{std::max(lbp.lo, ibp.lo), std::min(lbp.hi, ibp.hi)};
  if (out.lo > out.hi) return ibp;
  return out;
}

}  // namespace detail

/// Pre-activation linear bounds and their concretised intervals for one layer.
struct LbpLayer {
  std::vector<LinearBound> lower;
  std::vector<LinearBound> upper;
  std::vector<Interval> bounds;
};

inline std::vector<LbpLayer> lbp_layers(const Network& net, const InputBox& T, const WeightBox& R,
                                        const LbpOptions& opts = {}) {
  detail::check_boxes(net, T, R);
  std::vector<std::vector<Interval>> ibp;
  if (opts.intersect_ibp) ibp = ibp_layers(net, T, R);

  const std::size_t n0 = T.dim();
  std::vector<LbpLayer> layers;

  // Layer 0: McCormick on W_ij x_j around (W^L or W^U, x^L).
  {
    const auto& spec = net.layer(0);
    const auto lo = net.params(R.lower, 0);
    const auto hi = net.params(R.upper, 0);
    const std::size_t wo = net.weight_offset(0);
    const std::size_t prefix = wo + spec.weight_count();
    const auto& xl = T.lower();
    LbpLayer L;
    for (std::size_t i = 0; i < spec.rows; ++i) {
      for (BoundDirection dir : {BoundDirection::lower, BoundDirection::upper}) {
        const bool is_lower = dir == BoundDirection::lower;
        const auto& corner = is_lower ? lo : hi;
        LinearBound f;
        f.direction = dir;
        f.mu.resize(n0);
        f.nu.assign(prefix, 0.0);
        double lambda = is_lower ? lo.b(i) : hi.b(i);
        double mag = std::abs(lambda);
        for (std::size_t j = 0; j < n0; ++j) {
          const double wc = corner.w(i, j, spec.cols);
          f.mu[j] = wc;
          f.nu[wo + i * spec.cols + j] = xl[j];
          lambda -= wc * xl[j];
          mag += std::abs(wc * xl[j]);
        }
        f.lambda = lambda;
        f.mag = mag;
        (is_lower ? L.lower : L.upper).push_back(std::move(f));
      }
    }
    for (std::size_t i = 0; i < spec.rows; ++i) {
      Interval iv{detail::optimise(L.lower[i], T, R, true).value,
                  detail::optimise(L.upper[i], T, R, false).value};
      if (opts.intersect_ibp) iv = detail::tighten(iv, ibp[0][i]);
      L.bounds.push_back(iv);
    }
    layers.push_back(std::move(L));
  }

  for (std::size_t k = 1; k < net.num_layers(); ++k) {
    const auto& prev_spec = net.layer(k - 1);
    const auto& prev = layers.back();
    const std::size_t nk = prev_spec.rows;

    // Linear bounds on z^(k) = sigma(zeta^(k)) and their intervals.
    std::vector<LinearBound> zlow(nk), zup(nk);
    std::vector<double> zL(nk), zU(nk);
    for (std::size_t j = 0; j < nk; ++j) {
      const Interval zeta = prev.bounds[j];
      const auto r = relax_activation(prev_spec.activation, zeta.lo, zeta.hi);
      const double sl = detail::optimise(prev.lower[j], T, R, true).scale;
      const double su = detail::optimise(prev.upper[j], T, R, false).scale;
      zlow[j] = detail::scale_bound(r.alpha_l, r.beta_l, prev.lower[j], prev.upper[j], sl, su,
                                    BoundDirection::lower);
      zup[j] = detail::scale_bound(r.alpha_u, r.beta_u, prev.lower[j], prev.upper[j], sl, su,
                                   BoundDirection::upper);
      zL[j] = std::max(detail::optimise(zlow[j], T, R, true).value,
                       activate(prev_spec.activation, zeta.lo));
      zU[j] = std::min(detail::optimise(zup[j], T, R, false).value,
                       activate(prev_spec.activation, zeta.hi));
      if (zL[j] > zU[j]) {
        zL[j] = activate(prev_spec.activation, zeta.lo);
        zU[j] = activate(prev_spec.activation, zeta.hi);
      }
    }
    std::vector<double> zlow_scale(nk), zup_scale(nk);
    for (std::size_t j = 0; j < nk; ++j) {
      zlow_scale[j] = detail::optimise(zlow[j], T, R, true).scale;
      zup_scale[j] = detail::optimise(zup[j], T, R, false).scale;
    }

    // McCormick on W_ij z_j around (W^L or W^U, z^L), then sum over j.
    const auto& spec = net.layer(k);
    const auto lo = net.params(R.lower, k);
    const auto hi = net.params(R.upper, k);
    const std::size_t wo = net.weight_offset(k);
    const std::size_t prefix = wo + spec.weight_count();
    LbpLayer L;
    for (std::size_t i = 0; i < spec.rows; ++i) {
      for (BoundDirection dir : {BoundDirection::lower, BoundDirection::upper}) {
        const bool is_lower = dir == BoundDirection::lower;
        const auto& corner = is_lower ? lo : hi;
        LinearBound f;
        f.direction = dir;
        f.mu.assign(n0, 0.0);
        f.nu.assign(prefix, 0.0);
        double lambda = is_lower ? lo.b(i) : hi.b(i);
        double mag = std::abs(lambda);
        for (std::size_t j = 0; j < nk; ++j) {
          const double wc = corner.w(i, j, spec.cols);
          // lower: W^L_ij z_j >= W^L_ij * (zlow if W^L_ij >= 0 else zup); upper mirrored
          const bool use_low = (wc >= 0.0) == is_lower;
          const LinearBound& zb = use_low ? zlow[j] : zup[j];
          if (wc != 0.0) {
            for (std::size_t m = 0; m < n0; ++m) f.mu[m] += wc * zb.mu[m];
            detail::axpy(f.nu, wc, zb.nu);
            lambda += wc * zb.lambda;
            mag += std::abs(wc) * (use_low ? zlow_scale[j] : zup_scale[j]);
          }
          f.nu[wo + i * spec.cols + j] += zL[j];
          lambda -= wc * zL[j];
          mag += std::abs(wc * zL[j]);
        }
        f.lambda = lambda;
        f.mag = mag;
        (is_lower ? L.lower : L.upper).push_back(std::move(f));
      }
    }
    for (std::size_t i = 0; i < spec.rows; ++i) {
      Interval iv{detail::optimise(L.lower[i], T, R, true).value,
                  detail::optimise(L.upper[i], T, R, false).value};
      if (opts.intersect_ibp) iv = detail::tighten(iv, ibp[k][i]);
      L.bounds.push_back(iv);
    }
    layers.push_back(std::move(L));
  }
  return layers;
}

inline OutputBounds lbp_forward(const Network& net, const InputBox& T, const WeightBox& R,
                                const LbpOptions& opts = {}) {
  const auto layers = lbp_layers(net, T, R, opts);
  OutputBounds out;
  for (const auto& iv : layers.back().bounds) {
    out.lower.push_back(iv.lo);
    out.upper.push_back(iv.hi);
  }
  return out;
}

inline OutputBounds propagate(Method method, const Network& net, const InputBox& T,
                              const WeightBox& R, const LbpOptions& opts = {}) {
  return method == Method::ibp ? ibp_forward(net, T, R) : lbp_forward(net, T, R, opts);
}

}  // namespace bnncert
