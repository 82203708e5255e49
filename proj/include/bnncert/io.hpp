#pragma once

// JSON formats for posteriors, specifications and certificates.
//
// Posterior:
//   {"arch": {"input_dim": 4, "layers": [{"rows": 16, "cols": 4, "bias": true,
//             "activation": "relu"}, ...]},
//    "kind": "gaussian", "mean": [...], "variance": [...]}
//   or "kind": "samples", "samples": [[...], ...], "weights": [...] (optional)
//
// Spec:
//   {"center": [...], "epsilon": 0.1 | [...], "clip": [lo, hi] | {"lower": [...], "upper": [...]},
//    "true_class": 2}  or  "constraints": {"C": [[...]], "d": [...]}
//   Regression D_safe: "output_index", "floor", "ceiling".

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bnncert/certify.hpp"
#include "bnncert/error.hpp"
#include "bnncert/net.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/spec.hpp"

namespace bnncert::io {

using nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file: " + path);
  out << text;
  if (!out) throw ParseError("failed writing file: " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

namespace detail {

template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(what + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Network / posterior

inline json to_json(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"rows", l.rows}, {"cols", l.cols}, {"bias", l.has_bias},
                      {"activation", std::string(to_string(l.activation))}});
  return {{"input_dim", net.input_dim()}, {"layers", layers}};
}

inline Network network_from_json(const json& j) {
  const std::string what = "architecture";
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
    throw ParseError(what + ": missing 'layers' array");
  std::vector<LayerSpec> layers;
  for (const auto& l : j["layers"]) {
    LayerSpec s;
    s.rows = detail::field<std::size_t>(l, "rows", what);
    s.cols = detail::field<std::size_t>(l, "cols", what);
    s.has_bias = l.value("bias", true);
    try {
      s.activation = activation_from_string(detail::field<std::string>(l, "activation", what));
    } catch (const DomainError& e) {
      throw ParseError(what + ": " + e.what());
    }
    layers.push_back(s);
  }
  if (j.contains("input_dim") && !layers.empty() &&
      j["input_dim"].get<std::size_t>() != layers.front().cols)
    throw ShapeError("input_dim does not match the first layer's column count");
  return Network(std::move(layers));
}

struct PosteriorFile {
  Network net;
  Posterior posterior;
};

inline json to_json(const Network& net, const Posterior& p) {
  json j;
  j["arch"] = to_json(net);
  if (const auto* g = std::get_if<GaussianPosterior>(&p)) {
    j["kind"] = "gaussian";
    j["mean"] = g->mean;
    j["variance"] = g->variance;
  } else {
    const auto& s = std::get<SamplePosterior>(p);
    j["kind"] = "samples";
    j["samples"] = s.samples;
    j["weights"] = s.weights;
  }
  return j;
}

inline PosteriorFile posterior_from_json(const json& j) {
  const std::string what = "posterior";
  if (!j.is_object() || !j.contains("arch")) throw ParseError(what + ": missing field 'arch'");
  Network net = network_from_json(j["arch"]);
  const auto kind = detail::field<std::string>(j, "kind", what);
  Posterior p;
  if (kind == "gaussian") {
    p = GaussianPosterior(detail::field<std::vector<double>>(j, "mean", what),
                          detail::field<std::vector<double>>(j, "variance", what));
  } else if (kind == "samples") {
    auto samples = detail::field<std::vector<WeightVector>>(j, "samples", what);
    if (j.contains("weights"))
      p = SamplePosterior(std::move(samples), detail::field<std::vector<double>>(j, "weights", what));
    else
      p = SamplePosterior(std::move(samples));
  } else {
    throw ParseError(what + ": unknown kind '" + kind + "'");
  }
  if (posterior_size(p) != net.num_params())
    throw ShapeError("posterior has " + std::to_string(posterior_size(p)) +
                     " parameters but the architecture needs " + std::to_string(net.num_params()));
  return {std::move(net), std::move(p)};
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

inline PosteriorFile load_posterior(const std::string& path) {
  return posterior_from_json(parse_json(read_file(path), path));
}

inline void save_posterior(const std::string& path, const Network& net, const Posterior& p) {
  write_file(path, dump(to_json(net, p)));
}

// ---------------------------------------------------------------------------
// Specification

struct SpecFile {
  std::vector<double> center;
  std::vector<double> epsilon;  // length 1 or input_dim
  std::optional<ClipRange> clip;
  std::optional<std::size_t> true_class;
  std::optional<OutputSpec> constraints;
  std::optional<std::size_t> output_index;
  std::optional<double> floor;
  std::optional<double> ceiling;

  InputBox input_box() const { return linf_ball(center, epsilon, clip); }

  /// Safe set for a network with n outputs.
  OutputSpec output_spec(std::size_t n_outputs) const {
    if (constraints) {
      bnncert::detail::require_shape(constraints->output_dim() == n_outputs,
                            "constraint matrix width does not match the network output");
      return *constraints;
    }
    if (true_class) {
      bnncert::detail::require_shape(*true_class < n_outputs, "true_class out of range for the network");
      return argmax_spec(*true_class, n_outputs);
    }
    throw ParseError("spec needs 'true_class' or 'constraints'");
  }
};

inline SpecFile spec_from_json(const json& j) {
  const std::string what = "spec";
  SpecFile s;
  s.center = detail::field<std::vector<double>>(j, "center", what);
  if (!j.contains("epsilon")) throw ParseError(what + ": missing field 'epsilon'");
  if (j["epsilon"].is_number())
    s.epsilon = {j["epsilon"].get<double>()};
  else
    s.epsilon = detail::field<std::vector<double>>(j, "epsilon", what);
  if (j.contains("clip") && !j["clip"].is_null()) {
    const auto& c = j["clip"];
    ClipRange r;
    if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
      r.lower.assign(s.center.size(), c[0].get<double>());
      r.upper.assign(s.center.size(), c[1].get<double>());
    } else if (c.is_object()) {
      r.lower = detail::field<std::vector<double>>(c, "lower", what + " clip");
      r.upper = detail::field<std::vector<double>>(c, "upper", what + " clip");
    } else {
      throw ParseError(what + ": 'clip' must be [lo, hi] or {\"lower\", \"upper\"}");
    }
    s.clip = std::move(r);
  }
  if (j.contains("true_class")) s.true_class = detail::field<std::size_t>(j, "true_class", what);
  if (j.contains("constraints")) {
    const auto& c = j["constraints"];
    s.constraints = OutputSpec(detail::field<std::vector<std::vector<double>>>(c, "C", what),
                               detail::field<std::vector<double>>(c, "d", what));
  }
  if (j.contains("output_index")) s.output_index = detail::field<std::size_t>(j, "output_index", what);
  if (j.contains("floor")) s.floor = detail::field<double>(j, "floor", what);
  if (j.contains("ceiling")) s.ceiling = detail::field<double>(j, "ceiling", what);
  // validates radii and clip shapes
  try {
    (void)s.input_box();
  } catch (const DomainError& e) {
    throw ParseError(what + ": " + e.what());
  }
  return s;
}

inline SpecFile load_spec(const std::string& path) { return spec_from_json(parse_json(read_file(path), path)); }

// ---------------------------------------------------------------------------
// Certificates

inline json to_json(const CertifyConfig& c) {
  json j = {{"num_samples", c.num_samples},
            {"gamma", c.gamma},
            {"method", std::string(to_string(c.method))},
            {"margin_scale", std::string(to_string(c.margin_scale))},
            {"seed", c.seed},
            {"threads", c.threads},
            {"enumerate_atoms", c.enumerate_atoms},
            {"intersect_ibp", c.lbp.intersect_ibp},
            {"attack_iterations", c.attack_iterations},
            {"attack_restarts", c.attack_restarts}};
  if (c.bonferroni)
    j["bonferroni"] = {{"lower_depth", c.bonferroni->lower}, {"upper_depth", c.bonferroni->upper}};
  else
    j["bonferroni"] = nullptr;
  return j;
}

inline json to_json(const Certificate& c) {
  json j = {{"property", std::string(to_string(c.property))},
            {"direction", std::string(to_string(c.direction))},
            {"value", c.value},
            {"covered_mass", c.covered_mass},
            {"boxes_used", c.boxes_used},
            {"boxes_kept", c.boxes_kept},
            {"wall_time_seconds", c.wall_time},
            {"config", to_json(c.config)}};
  if (!c.per_class.empty()) j["per_class"] = c.per_class;
  if (c.target) j["target"] = *c.target;
  return j;
}

}  // namespace bnncert::io
