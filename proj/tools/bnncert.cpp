// bnncert: command-line front end for BNN certification.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bnncert/bnncert.hpp"

namespace {

using namespace bnncert;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitIo = 2;
constexpr int kExitShape = 3;
constexpr int kExitUsage = 64;

struct CommonFlags {
  std::size_t samples = 5;
  double gamma = 2.5;
  std::string method = "lbp";
  std::string margin_scale = "std";
  std::string bonferroni;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool no_intersect = false;
  std::string out;

  CertifyConfig config() const {
    CertifyConfig c;
    c.num_samples = samples;
    c.gamma = gamma;
    c.method = method_from_string(method);
    c.margin_scale = margin_scale == "var" ? MarginScale::variance : MarginScale::std_dev;
    c.seed = seed;
    c.threads = threads;
    c.lbp.intersect_ibp = !no_intersect;
    if (!bonferroni.empty()) {
      BonferroniDepths d;
      const auto comma = bonferroni.find(',');
      try {
        d.lower = std::stoul(bonferroni.substr(0, comma));
        if (comma != std::string::npos) d.upper = std::stoul(bonferroni.substr(comma + 1));
      } catch (const std::exception&) {
        throw DomainError("--bonferroni expects LOWER[,UPPER] depths, got '" + bonferroni + "'");
      }
      c.bonferroni = d;
    }
    return c;
  }
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--samples", f.samples, "number of sampled weight boxes");
  app->add_option("--gamma", f.gamma, "weight margin multiplier")->check(CLI::NonNegativeNumber);
  app->add_option("--method", f.method, "propagation method")->check(CLI::IsMember({"ibp", "lbp"}));
  app->add_option("--margin-scale", f.margin_scale, "margin unit: std deviations or variances")
      ->check(CLI::IsMember({"std", "var"}));
  app->add_option("--bonferroni", f.bonferroni, "keep overlapping boxes; depths LOWER[,UPPER], e.g. 2,1");
  app->add_option("--seed", f.seed, "base random seed");
  app->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--no-ibp-intersect", f.no_intersect, "do not intersect LBP bounds with IBP");
  app->add_option("--out", f.out, "output path (default stdout)");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty())
    std::cout << text;
  else
    io::write_file(path, text);
}

std::shared_ptr<spdlog::logger> make_logger() {
  auto log = spdlog::stderr_color_mt("bnncert");
  log->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("BNNCERT_LOG")) log->set_level(spdlog::level::from_str(env));
  return log;
}

// ---------------------------------------------------------------------------

struct CertifyFlags {
  std::string posterior, spec, property = "psafe", bound = "lower";
  std::optional<double> tau_uncertain, floor, ceiling;
};

int cmd_certify(const CertifyFlags& f, const CommonFlags& c, spdlog::logger& log) {
  const auto pf = io::load_posterior(f.posterior);
  const auto sf = io::load_spec(f.spec);
  const auto T = sf.input_box();
  pf.net.check_input(T.lower());
  const auto cfg = c.config();
  const bool lower = f.bound == "lower";
  Certificate cert;
  json extra = json::object();
  if (f.property == "psafe") {
    const auto S = sf.output_spec(pf.net.output_dim());
    cert = lower ? psafe_lower(pf.net, pf.posterior, T, S, cfg) : psafe_upper(pf.net, pf.posterior, T, S, cfg);
  } else {
    Task t;
    if (sf.true_class) {
      t = task::Classification{*sf.true_class};
    } else {
      task::Regression r;
      r.index = sf.output_index.value_or(0);
      r.floor = f.floor ? f.floor : sf.floor;
      r.ceiling = f.ceiling ? f.ceiling : sf.ceiling;
      t = r;
    }
    cert = lower ? dsafe_lower(pf.net, pf.posterior, T, cfg, t) : dsafe_upper(pf.net, pf.posterior, T, cfg, t);
    if (sf.true_class) {
      const auto db = decision_bounds(pf.net, pf.posterior, T, cfg);
      extra["decision"] = std::string(to_string(classify_decision(db.lower, db.upper, *sf.true_class, f.tau_uncertain)));
      if (f.tau_uncertain) extra["uncertain"] = uncertainty_check(db.upper, *f.tau_uncertain);
    }
  }
  log.info("{} {} = {} ({} of {} boxes, {:.3f}s)", f.property, f.bound, cert.value, cert.boxes_kept,
           cert.boxes_used, cert.wall_time);
  json j = io::to_json(cert);
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  emit(c.out, io::dump(j));
  return kExitOk;
}

struct SweepFlags {
  std::string posterior, sweep;
  std::optional<double> tau_safe, tau_unsafe;
};

int cmd_sweep(const SweepFlags& f, const CommonFlags& c, spdlog::logger& log) {
  const auto pf = io::load_posterior(f.posterior);
  auto spec = io::load_sweep(f.sweep);
  if (f.tau_safe) spec.tau_safe = *f.tau_safe;
  if (f.tau_unsafe) spec.tau_unsafe = *f.tau_unsafe;
  const auto result = run_sweep(pf.net, pf.posterior, spec, c.config());
  log.info("sweep: {} safe, {} unsafe, {} uncertifiable", result.count(CellVerdict::safe),
           result.count(CellVerdict::unsafe), result.count(CellVerdict::uncertifiable));
  std::ostringstream os;
  write_sweep_csv(os, result);
  emit(c.out, os.str());
  return kExitOk;
}

struct RadiusFlags {
  std::string posterior;
  std::vector<std::string> specs;
  RadiusSearchConfig r;
};

int cmd_radius(const RadiusFlags& f, const CommonFlags& c, spdlog::logger& log) {
  const auto pf = io::load_posterior(f.posterior);
  const auto cfg = c.config();
  std::ostringstream os;
  os.precision(12);
  os << "instance,max_robust_radius,min_unrobust_radius,vacuous\n";
  for (std::size_t i = 0; i < f.specs.size(); ++i) {
    const auto sf = io::load_spec(f.specs[i]);
    pf.net.check_input(sf.center);
    auto rcfg = f.r;
    rcfg.clip = sf.clip;
    const auto S = sf.output_spec(pf.net.output_dim());
    const double maxrr = max_robust_radius(pf.net, pf.posterior, sf.center, S, cfg, rcfg);
    const auto minur = min_unrobust_radius(pf.net, pf.posterior, sf.center, S, cfg, rcfg);
    log.info("{}: MaxRR {} MinUR {}{}", f.specs[i], maxrr, minur.radius, minur.vacuous ? " (vacuous)" : "");
    os << f.specs[i] << ',' << maxrr << ',' << minur.radius << ',' << (minur.vacuous ? 1 : 0) << '\n';
  }
  emit(c.out, os.str());
  return kExitOk;
}

struct DataFlags {
  std::string data = "blobs";
  std::size_t n = 500;
  std::vector<std::size_t> hidden{16};
  std::string activation = "relu";
  double noise = 0.1;
  double prior_variance = 1.0;
  std::uint64_t seed = 0;
  std::string out;

  Dataset make() const {
    if (data == "blobs") return data::two_blobs(n, 0.3, seed);
    if (data == "cubic") return data::cubic(n, noise, seed);
    if (data == "advisory") return data::advisory(n, seed);
    return data::linear(n, 2.0, noise, seed);
  }
  bool regression() const { return data == "cubic" || data == "linear"; }
  Network net(const Dataset& d) const {
    std::vector<std::size_t> dims{d.x.front().size()};
    for (std::size_t h : hidden)
      if (h > 0) dims.push_back(h);
    dims.push_back(d.y.front().size());
    if (dims.size() == 2) return Network({{dims[1], dims[0], data != "linear", ActivationKind::identity}});
    return Network::mlp(dims, activation_from_string(activation));
  }
};

void add_data(CLI::App* app, DataFlags& f) {
  app->add_option("--data", f.data, "synthetic dataset")->check(CLI::IsMember({"blobs", "cubic", "advisory", "linear"}));
  app->add_option("--n", f.n, "number of examples")->check(CLI::PositiveNumber);
  app->add_option("--hidden", f.hidden, "hidden layer widths; 0 for a linear model")->delimiter(',');
  app->add_option("--activation", f.activation, "hidden activation")->check(CLI::IsMember({"relu", "tanh"}));
  app->add_option("--noise", f.noise, "target noise std (regression data)")->check(CLI::PositiveNumber);
  app->add_option("--prior-variance", f.prior_variance, "prior variance")->check(CLI::PositiveNumber);
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--out", f.out, "posterior output path")->required();
}

int cmd_train(const DataFlags& f, TrainConfig cfg, spdlog::logger& log) {
  const auto d = f.make();
  const auto net = f.net(d);
  cfg.prior_variance = f.prior_variance;
  cfg.likelihood = f.regression() ? Likelihood::gaussian : Likelihood::categorical;
  if (f.regression()) cfg.noise_variance = f.noise * f.noise;
  const auto r = fit_vi(net, d, cfg, f.seed);
  log.info("final ELBO per example {}", r.elbo_trace.back());
  io::save_posterior(f.out, net, r.posterior);
  return kExitOk;
}

int cmd_hmc(const DataFlags& f, HmcConfig cfg, spdlog::logger& log) {
  const auto d = f.make();
  const auto net = f.net(d);
  cfg.prior_variance = f.prior_variance;
  cfg.likelihood = f.regression() ? Likelihood::gaussian : Likelihood::categorical;
  if (f.regression()) cfg.noise_variance = f.noise * f.noise;
  const auto r = sample_hmc(net, d, cfg, f.seed);
  if (r.warning) log.warn("{}", *r.warning);
  log.info("acceptance rate {}", r.acceptance_rate);
  json j = io::to_json(net, r.posterior);
  j["metadata"] = {{"acceptance_rate", r.acceptance_rate}, {"max_energy_error", r.max_energy_error}};
  if (r.warning) j["metadata"]["warning"] = *r.warning;
  io::write_file(f.out, io::dump(j));
  return kExitOk;
}

int cmd_validate(std::size_t threads, std::size_t draws) {
  const auto checks = validate::run_toy_suite(threads, draws);
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%-26s %s  lower %.6f  upper %.6f  estimate [%.6f, %.6f]\n", c.name.c_str(),
                c.ok ? "ok  " : "FAIL", c.lower, c.upper, c.estimate_lo, c.estimate_hi);
    all = all && c.ok;
  }
  return all ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certify Bayesian neural networks against input-output specifications"};
  app.require_subcommand(1);

  CommonFlags common;
  CertifyFlags cf;
  auto* certify = app.add_subcommand("certify", "bound P_safe or D_safe for one specification");
  certify->add_option("--posterior", cf.posterior, "posterior JSON")->required();
  certify->add_option("--spec", cf.spec, "specification JSON")->required();
  certify->add_option("--property", cf.property, "psafe or dsafe")->check(CLI::IsMember({"psafe", "dsafe"}));
  certify->add_option("--bound", cf.bound, "lower or upper")->check(CLI::IsMember({"lower", "upper"}));
  certify->add_option("--tau-uncertain", cf.tau_uncertain, "report certified uncertainty below this level");
  certify->add_option("--floor", cf.floor, "regression output floor");
  certify->add_option("--ceiling", cf.ceiling, "regression output ceiling");
  add_common(certify, common);

  SweepFlags sf;
  auto* sweep = app.add_subcommand("sweep", "certify every cell of a state-space grid");
  sweep->add_option("sweep", sf.sweep, "sweep JSON")->required();
  sweep->add_option("--posterior", sf.posterior, "posterior JSON")->required();
  sweep->add_option("--tau-safe", sf.tau_safe, "safe threshold (default 0.98)");
  sweep->add_option("--tau-unsafe", sf.tau_unsafe, "unsafe threshold (default 0.05)");
  add_common(sweep, common);

  RadiusFlags rf;
  auto* radius = app.add_subcommand("radius", "MaxRR / MinUR linear search per specification");
  radius->add_option("--posterior", rf.posterior, "posterior JSON")->required();
  radius->add_option("--spec", rf.specs, "specification JSON (repeatable)")->required();
  radius->add_option("--tau-safe", rf.r.tau_safe, "safe threshold");
  radius->add_option("--tau-unsafe", rf.r.tau_unsafe, "unsafe threshold");
  radius->add_option("--step", rf.r.step, "epsilon step");
  radius->add_option("--eps-start-unsafe", rf.r.eps_start_unsafe, "MinUR starting radius");
  radius->add_option("--eps-cap", rf.r.eps_cap, "largest radius searched");
  add_common(radius, common);

  DataFlags df;
  TrainConfig tc;
  auto* train = app.add_subcommand("train", "fit a mean-field Gaussian posterior with VI");
  add_data(train, df);
  train->add_option("--epochs", tc.epochs, "epochs")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tc.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", tc.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--kl-weight", tc.kl_weight, "KL term weight")->check(CLI::NonNegativeNumber);

  DataFlags hf;
  HmcConfig hc;
  auto* hmc = app.add_subcommand("hmc", "draw posterior samples with HMC");
  add_data(hmc, hf);
  hmc->add_option("--leapfrog", hc.leapfrog_steps, "leapfrog steps per trajectory")->check(CLI::PositiveNumber);
  hmc->add_option("--step-size", hc.step_size, "leapfrog step size")->check(CLI::PositiveNumber);
  hmc->add_option("--num-samples", hc.num_samples, "samples kept")->check(CLI::PositiveNumber);
  hmc->add_option("--burn-in", hc.burn_in, "discarded initial iterations");

  std::size_t vthreads = 1, vdraws = 2000;
  auto* val = app.add_subcommand("validate", "run the bundled Monte Carlo sandwich suite");
  val->add_option("--threads", vthreads, "worker threads")->check(CLI::PositiveNumber);
  val->add_option("--draws", vdraws, "posterior draws per estimate")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kExitUsage;
  }

  auto log = make_logger();
  try {
    if (*certify) return cmd_certify(cf, common, *log);
    if (*sweep) return cmd_sweep(sf, common, *log);
    if (*radius) return cmd_radius(rf, common, *log);
    if (*train) return cmd_train(df, tc, *log);
    if (*hmc) return cmd_hmc(hf, hc, *log);
    if (*val) return cmd_validate(vthreads, vdraws);
  } catch (const ParseError& e) {
    log->error("{}", e.what());
    return kExitIo;
  } catch (const ShapeError& e) {
    log->error("{}", e.what());
    return kExitShape;
  } catch (const DomainError& e) {
    log->error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
