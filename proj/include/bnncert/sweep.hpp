#pragma once

// State-space sweeps: certify every cell of a regular grid and classify it as
// safe, unsafe or uncertifiable.

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnncert/certify.hpp"
#include "bnncert/error.hpp"
#include "bnncert/io.hpp"
#include "bnncert/parallel.hpp"

namespace bnncert {

struct GridAxis {
  double min = 0.0;
  double max = 1.0;
  double cell_width = 1.0;

  std::size_t cells() const {
    return static_cast<std::size_t>(std::ceil((max - min) / cell_width - 1e-9));
  }
};

struct SweepSpec {
  std::vector<GridAxis> grid;
  std::optional<std::vector<std::size_t>> labels;  // per cell; default: mean-network argmax
  double tau_safe = 0.98;
  double tau_unsafe = 0.05;

  void validate() const {
    if (grid.empty()) throw DomainError("sweep grid needs at least one axis");
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto& a = grid[k];
      if (!(a.cell_width > 0.0)) throw DomainError("grid axis " + std::to_string(k) + ": cell_width must be positive");
      if (!(a.max > a.min)) throw DomainError("grid axis " + std::to_string(k) + ": max must exceed min");
    }
    if (!(tau_unsafe < tau_safe)) throw DomainError("tau_unsafe must be below tau_safe");
    if (labels && labels->size() != num_cells())
      throw ShapeError("sweep has " + std::to_string(num_cells()) + " cells but " +
                       std::to_string(labels->size()) + " labels");
  }

  std::size_t num_cells() const {
    std::size_t n = 1;
    for (const auto& a : grid) n *= a.cells();
    return n;
  }

  /// Cell `id` in row-major order (last axis fastest); cells tile [min, max).
  InputBox cell(std::size_t id) const {
    std::vector<double> lo(grid.size()), hi(grid.size());
    for (std::size_t k = grid.size(); k-- > 0;) {
      const auto& a = grid[k];
      const std::size_t i = id % a.cells();
      id /= a.cells();
      lo[k] = a.min + static_cast<double>(i) * a.cell_width;
      hi[k] = std::min(a.max, lo[k] + a.cell_width);
    }
    return InputBox(std::move(lo), std::move(hi));
  }
};

enum class CellVerdict { safe, unsafe, uncertifiable };

inline std::string_view to_string(CellVerdict v) {
  switch (v) {
    case CellVerdict::safe: return "safe";
    case CellVerdict::unsafe: return "unsafe";
    case CellVerdict::uncertifiable: return "uncertifiable";
  }
  return "uncertifiable";
}

/// Strict thresholds: safe if lower > tau_safe, unsafe if upper < tau_unsafe.
inline CellVerdict cell_verdict(double lower, double upper, double tau_safe, double tau_unsafe) {
  if (lower > tau_safe) return CellVerdict::safe;
  if (upper < tau_unsafe) return CellVerdict::unsafe;
  return CellVerdict::uncertifiable;
}

struct SweepRow {
  std::size_t cell = 0;
  std::size_t label = 0;
  double psafe_lower = 0.0;
  double psafe_upper = 1.0;
  CellVerdict verdict = CellVerdict::uncertifiable;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double tau_safe = 0.0;
  double tau_unsafe = 0.0;

  std::size_t count(CellVerdict v) const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.verdict == v;
    return n;
  }
};

namespace detail {

[[noreturn]] inline void rethrow_for_cell(std::size_t id) {
  const std::string prefix = "sweep cell " + std::to_string(id) + ": ";
  try {
    throw;
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace detail

/// Certifies every cell; cells run on cfg.threads workers, each certification single-threaded.
inline SweepResult run_sweep(const Network& net, const Posterior& p, const SweepSpec& spec,
                             const CertifyConfig& cfg) {
  spec.validate();
  detail::require_shape(spec.grid.size() == net.input_dim(), "sweep grid has " +
                                                                 std::to_string(spec.grid.size()) +
                                                                 " axes but the network takes " +
                                                                 std::to_string(net.input_dim()) + " inputs");
  const std::size_t n = spec.num_cells();
  SweepResult out;
  out.tau_safe = spec.tau_safe;
  out.tau_unsafe = spec.tau_unsafe;
  out.rows.resize(n);
  CertifyConfig inner = cfg;
  inner.threads = 1;
  parallel_for(n, cfg.threads, [&](std::size_t id) {
    try {
      const InputBox T = spec.cell(id);
      const std::size_t label = spec.labels ? (*spec.labels)[id] : predicted_class(net, p, T.center());
      const OutputSpec S = argmax_spec(label, net.output_dim());
      CertifyConfig c = inner;
      c.seed = derive_seed(cfg.seed, id);
      SweepRow row;
      row.cell = id;
      row.label = label;
      row.psafe_lower = psafe_lower(net, p, T, S, c).value;
      row.psafe_upper = psafe_upper(net, p, T, S, c).value;
      row.verdict = cell_verdict(row.psafe_lower, row.psafe_upper, spec.tau_safe, spec.tau_unsafe);
      out.rows[id] = row;
    } catch (...) {
      detail::rethrow_for_cell(id);
    }
  });
  return out;
}

/// CSV rows followed by a '#' summary footer with counts, proportions and thresholds.
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "cell,label,psafe_lower,psafe_upper,verdict\n";
  os.precision(17);
  for (const auto& row : r.rows)
    os << row.cell << ',' << row.label << ',' << row.psafe_lower << ',' << row.psafe_upper << ','
       << to_string(row.verdict) << '\n';
  const double total = static_cast<double>(r.rows.size());
  os.precision(6);
  os << "# cells," << r.rows.size() << '\n';
  for (auto v : {CellVerdict::safe, CellVerdict::unsafe, CellVerdict::uncertifiable}) {
    const std::size_t c = r.count(v);
    os << "# " << to_string(v) << ',' << c << ',' << (total > 0 ? static_cast<double>(c) / total : 0.0) << '\n';
  }
  os << "# tau_safe," << r.tau_safe << '\n';
  os << "# tau_unsafe," << r.tau_unsafe << '\n';
}

namespace io {

/// {"grid": [{"min", "max", "cell_width"}, ...], "labels": [...], "tau_safe", "tau_unsafe"}
inline SweepSpec sweep_from_json(const json& j) {
  const std::string what = "sweep";
  SweepSpec s;
  if (!j.is_object() || !j.contains("grid") || !j["grid"].is_array())
    throw ParseError(what + ": missing 'grid' array");
  for (const auto& a : j["grid"])
    s.grid.push_back({detail::field<double>(a, "min", what), detail::field<double>(a, "max", what),
                      detail::field<double>(a, "cell_width", what)});
  if (j.contains("labels")) s.labels = detail::field<std::vector<std::size_t>>(j, "labels", what);
  s.tau_safe = j.value("tau_safe", s.tau_safe);
  s.tau_unsafe = j.value("tau_unsafe", s.tau_unsafe);
  return s;
}

inline SweepSpec load_sweep(const std::string& path) { return sweep_from_json(parse_json(read_file(path), path)); }

}  // namespace io
}  // namespace bnncert
