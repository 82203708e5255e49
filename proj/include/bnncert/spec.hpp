#pragma once

// Input regions (axis-aligned boxes) and safe output sets (polytopes C y + d >= 0).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnncert/error.hpp"

namespace bnncert {

class InputBox {
 public:
  InputBox() = default;
  InputBox(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require_shape(lower_.size() == upper_.size(), "input box bounds differ in length");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]))
        throw DomainError("input box entry " + std::to_string(i) + " is not finite");
      if (lower_[i] > upper_[i])
        throw DomainError("input box lower > upper in dimension " + std::to_string(i));
    }
  }

  static InputBox point(std::vector<double> x) { return InputBox(x, x); }

  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  std::size_t dim() const { return lower_.size(); }

  std::vector<double> center() const {
    std::vector<double> c(dim());
    for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower_[i] + upper_[i]);
    return c;
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
    return true;
  }

  bool subset_of(const InputBox& other) const {
    if (other.dim() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (lower_[i] < other.lower_[i] || upper_[i] > other.upper_[i]) return false;
    return true;
  }

  friend bool operator==(const InputBox&, const InputBox&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Per-dimension clipping range applied after building a ball.
struct ClipRange {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// l_inf ball around x with a per-dimension radius, optionally clipped.
inline InputBox linf_ball(std::span<const double> x, std::span<const double> eps,
                          const std::optional<ClipRange>& clip = std::nullopt) {
  detail::require_shape(eps.size() == x.size() || eps.size() == 1,
                        "epsilon must be a scalar or match the input dimension");
  if (clip) {
    detail::require_shape(clip->lower.size() == x.size() && clip->upper.size() == x.size(),
                          "clip range must match the input dimension");
  }
  std::vector<double> lo(x.size()), hi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = eps.size() == 1 ? eps[0] : eps[i];
    if (!(e >= 0.0)) throw DomainError("epsilon must be non-negative");
    lo[i] = x[i] - e;
    hi[i] = x[i] + e;
    if (clip) {
      lo[i] = std::max(lo[i], clip->lower[i]);
      hi[i] = std::min(hi[i], clip->upper[i]);
      // a centre outside the clip range collapses onto the nearest edge
      if (lo[i] > hi[i]) lo[i] = hi[i] = std::clamp(x[i], clip->lower[i], clip->upper[i]);
    }
  }
  return InputBox(std::move(lo), std::move(hi));
}

inline InputBox linf_ball(std::span<const double> x, double eps,
                          const std::optional<ClipRange>& clip = std::nullopt) {
  const double e[1] = {eps};
  return linf_ball(x, std::span<const double>(e, 1), clip);
}

/// Safe set {y : C y + d >= 0}, one row per linear constraint.
class OutputSpec {
 public:
  OutputSpec() = default;
  OutputSpec(std::vector<std::vector<double>> C, std::vector<double> d)
      : C_(std::move(C)), d_(std::move(d)) {
    detail::require_shape(C_.size() == d_.size(), "constraint matrix rows must equal len(d)");
    detail::require_shape(!C_.empty(), "output spec needs at least one constraint");
    for (const auto& row : C_)
      detail::require_shape(row.size() == C_.front().size(), "ragged constraint matrix");
  }

  const std::vector<std::vector<double>>& C() const { return C_; }
  const std::vector<double>& d() const { return d_; }
  std::size_t rows() const { return C_.size(); }
  std::size_t output_dim() const { return C_.front().size(); }

  /// Row values C y + d at a single point.
  std::vector<double> row_values(std::span<const double> y) const {
    check(y);
    std::vector<double> v(rows());
    for (std::size_t j = 0; j < rows(); ++j) {
      double acc = d_[j];
      for (std::size_t i = 0; i < y.size(); ++i) acc += C_[j][i] * y[i];
      v[j] = acc;
    }
    return v;
  }

  /// min_j (C y + d)_j; non-negative exactly when y is safe.
  double margin(std::span<const double> y) const {
    const auto v = row_values(y);
    return *std::min_element(v.begin(), v.end());
  }

  bool satisfied(std::span<const double> y) const { return margin(y) >= 0.0; }

  void check(std::span<const double> y) const {
    if (y.size() != output_dim())
      throw ShapeError("output spec has " + std::to_string(output_dim()) + " columns but output has " +
                       std::to_string(y.size()));
  }

  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;

 private:
  std::vector<std::vector<double>> C_;
  std::vector<double> d_;
};

/// Rows y_true - y_j >= 0 for every j != true_class.
inline OutputSpec argmax_spec(std::size_t true_class, std::size_t n_classes) {
  if (n_classes < 2) throw DomainError("argmax spec needs at least two classes");
  if (true_class >= n_classes) throw DomainError("true class out of range");
  std::vector<std::vector<double>> C;
  for (std::size_t j = 0; j < n_classes; ++j) {
    if (j == true_class) continue;
    std::vector<double> row(n_classes, 0.0);
    row[true_class] = 1.0;
    row[j] = -1.0;
    C.push_back(std::move(row));
  }
  std::vector<double> d(C.size(), 0.0);
  return OutputSpec(std::move(C), std::move(d));
}

namespace detail {

inline void check_output_box(const OutputSpec& S, std::span<const double> yL,
                             std::span<const double> yU) {
  S.check(yL);
  S.check(yU);
}

/// Minimum (worst) and maximum (best) of row j over the box.
inline double row_worst(const OutputSpec& S, std::size_t j, std::span<const double> yL,
                        std::span<const double> yU) {
  double acc = S.d()[j];
  for (std::size_t i = 0; i < yL.size(); ++i) {
    const double c = S.C()[j][i];
    acc += c >= 0.0 ? c * yL[i] : c * yU[i];
  }
  return acc;
}

inline double row_best(const OutputSpec& S, std::size_t j, std::span<const double> yL,
                       std::span<const double> yU) {
  double acc = S.d()[j];
  for (std::size_t i = 0; i < yL.size(); ++i) {
    const double c = S.C()[j][i];
    acc += c >= 0.0 ? c * yU[i] : c * yL[i];
  }
  return acc;
}

}  // namespace detail

/// True iff every y in [yL, yU] satisfies all constraints (exact for boxes).
inline bool contains(const OutputSpec& S, std::span<const double> yL, std::span<const double> yU) {
  detail::check_output_box(S, yL, yU);
  for (std::size_t j = 0; j < S.rows(); ++j)
    if (detail::row_worst(S, j, yL, yU) < 0.0) return false;
  return true;
}

/// True if some single row is violated everywhere on [yL, yU].
inline bool excludes(const OutputSpec& S, std::span<const double> yL, std::span<const double> yU) {
  detail::check_output_box(S, yL, yU);
  for (std::size_t j = 0; j < S.rows(); ++j)
    if (detail::row_best(S, j, yL, yU) < 0.0) return true;
  return false;
}

}  // namespace bnncert
