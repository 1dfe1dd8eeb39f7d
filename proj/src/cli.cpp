#include "fdnet/cli.hpp"

#include "fdnet/avgeff.hpp"
#include "fdnet/error.hpp"
#include "fdnet/json_io.hpp"
#include "fdnet/linmodel.hpp"
#include "fdnet/logitmodel.hpp"
#include "fdnet/simkit.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace fdnet::cli {

namespace {

using json::Json;
using linalg::Matrix;
using linalg::Vector;

// Pattern searches on large networks grow combinatorially; stop well before memory runs out.
constexpr std::size_t kMaxPatterns = 2'000'000;

struct Options {
  std::string input;
  std::string output;
  std::string config;
  std::string theta;
  std::optional<std::uint64_t> seed;
  int reps = 0;
  std::optional<double> tol;
  int cap = logit::kDefaultCap;
  std::string effects = "worker,firm";
  std::string target;
  std::string pattern = "C";
  std::string weight = "identity";
  std::string model = "logit";
  std::string estimator = "var_firm";
  int points = 81;
  double sigma2 = 1.0;
};

void emit(const Json& doc, const Options& opt) {
  const std::string text = doc.dump(2) + "\n";
  if (opt.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(opt.output);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write '" + opt.output + "'");
  out << text;
}

Vector parse_theta(const std::string& text, const char* where) {
  if (text.empty()) fail(ErrorCode::InvalidArgument, std::string(where) + ": --theta is required");
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "--theta: '" + item + "' is not a number");
    }
  }
  Vector out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Eigen::Index>(i)) = values[i];
  return out;
}

NetworkData load(const Options& opt) {
  NetworkData net = load_edge_list_file(opt.input);
  std::cerr << "loaded " << net.size() << " edges, " << net.n_workers << " workers, "
            << net.n_firms << " firms\n";
  return net;
}

Matrix edge_covariates(const NetworkData& net, const std::vector<std::size_t>& edges) {
  Matrix x(static_cast<Eigen::Index>(edges.size()), net.n_covariates);
  for (std::size_t r = 0; r < edges.size(); ++r) {
    for (int c = 0; c < net.n_covariates; ++c) {
      x(static_cast<Eigen::Index>(r), c) = net.edges[edges[r]].x[c];
    }
  }
  return x;
}

Vector edge_outcomes(const NetworkData& net, const std::vector<std::size_t>& edges) {
  Vector y(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t r = 0; r < edges.size(); ++r) y(static_cast<Eigen::Index>(r)) = net.edges[edges[r]].y;
  return y;
}

// Worker edge lists (sorted by period) for workers observed exactly twice.
std::vector<std::vector<std::size_t>> two_period_workers(const NetworkData& net) {
  std::vector<std::vector<std::size_t>> by_worker(net.n_workers);
  for (std::size_t e = 0; e < net.edges.size(); ++e) by_worker[net.edges[e].worker].push_back(e);
  std::vector<std::vector<std::size_t>> out;
  for (auto& edges : by_worker) {
    if (edges.size() != 2) continue;
    std::sort(edges.begin(), edges.end(), [&](std::size_t a, std::size_t b) {
      return net.edges[a].period < net.edges[b].period;
    });
    out.push_back(edges);
  }
  return out;
}

std::vector<logit::DataBlock> logit_blocks(const NetworkData& net, const std::string& pattern) {
  if (net.n_covariates == 0) fail(ErrorCode::InvalidArgument, "logit estimation needs covariates");
  std::vector<logit::DataBlock> blocks;
  if (pattern == "panel") {
    for (const auto& edges : two_period_workers(net)) {
      logit::DataBlock b{logit::panel_design(edge_covariates(net, edges), edge_outcomes(net, edges)),
                         logit::conditional_logit_builder(), "panel"};
      blocks.push_back(std::move(b));
    }
    return blocks;
  }
  const auto kind = pattern_kind_from_string(pattern);
  if (!kind || (*kind != PatternKind::ConfigC && *kind != PatternKind::ConfigF &&
                *kind != PatternKind::Tetrad)) {
    fail(ErrorCode::InvalidArgument, "--pattern must be C, F, tetrad or panel");
  }
  for (const auto& p : find_patterns(net, *kind, kMaxPatterns)) {
    const Matrix x = edge_covariates(net, p.member_edges);
    const Vector y = edge_outcomes(net, p.member_edges);
    logit::DataBlock b;
    if (*kind == PatternKind::ConfigC) {
      b = {logit::config_c_design(x, y), logit::config_c_builder(), "C"};
    } else if (*kind == PatternKind::ConfigF) {
      b = {logit::config_f_design(x, y), logit::config_f_builder(), "F"};
    } else {
      b = {logit::tetrad_design(x, y), logit::tetrad_builder(), "tetrad"};
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::uint64_t seed_or(const Options& opt, std::uint64_t fallback) {
  return opt.seed ? *opt.seed : fallback;
}

// ---- subcommands ----

int cmd_simulate(const Options& opt) {
  sim::SimConfig config = sim::load_config_file(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  const sim::Simulation s = sim::simulate(config);
  std::ofstream out(opt.output);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write '" + opt.output + "'");
  write_edge_list(out, s.net);
  const auto comps = connected_components(s.net);
  int movers = 0;
  {
    std::vector<int> first_firm(s.net.n_workers, -1);
    std::vector<bool> moved(s.net.n_workers, false);
    for (const auto& e : s.net.edges) {
      if (first_firm[e.worker] < 0) first_firm[e.worker] = e.firm;
      else if (first_firm[e.worker] != e.firm) moved[e.worker] = true;
    }
    for (bool m : moved) movers += m ? 1 : 0;
  }
  Json doc;
  doc["output"] = opt.output;
  doc["n_edges"] = s.net.size();
  doc["n_workers"] = s.net.n_workers;
  doc["n_firms"] = s.net.n_firms;
  doc["n_periods"] = s.net.n_periods;
  doc["n_covariates"] = s.net.n_covariates;
  doc["movers"] = movers;
  doc["components"] = comps.count;
  doc["seed"] = config.seed;
  std::cout << doc.dump(2) << "\n";
  std::cerr << "wrote " << s.net.size() << " edges to " << opt.output << "\n";
  return 0;
}

DesignMatrices linear_design(const NetworkData& net, const std::string& effects) {
  if (effects == "worker,firm" || effects == "firm,worker") {
    return build_design(net, Normalization::DropLastFirmPerComponent);
  }
  const bool workers = effects == "worker";
  if (!workers && effects != "firm") {
    fail(ErrorCode::InvalidArgument, "--effects must be worker, firm or worker,firm");
  }
  const int m = workers ? net.n_workers : net.n_firms;
  Matrix x1 = Matrix::Zero(static_cast<Eigen::Index>(net.size()), m);
  Matrix x2(static_cast<Eigen::Index>(net.size()), net.n_covariates);
  Vector y(static_cast<Eigen::Index>(net.size()));
  for (std::size_t e = 0; e < net.size(); ++e) {
    const auto r = static_cast<Eigen::Index>(e);
    const Edge& edge = net.edges[e];
    x1(r, workers ? edge.worker : edge.firm) = 1.0;
    for (int c = 0; c < net.n_covariates; ++c) x2(r, c) = edge.x[c];
    y(r) = edge.y;
  }
  DesignMatrices dm = DesignMatrices::from_dense(std::move(y), x1, std::move(x2));
  dm.normalization = workers ? "worker effects only" : "firm effects only";
  return dm;
}

int cmd_estimate_linear(const Options& opt) {
  const NetworkData net = load(opt);
  const DesignMatrices dm = linear_design(net, opt.effects);
  const Vector beta = lin::estimate_beta(dm.y, dm);
  EstimateResult r;
  r.estimate.assign(beta.data(), beta.data() + beta.size());
  r.n = static_cast<std::size_t>(dm.n());
  r.n2 = dm.n2();
  if (dm.n2() > 0) r.components["sigma2"] = lin::estimate_sigma2(dm.y, dm, beta);
  r.diagnostics["rank1"] = dm.rank1;
  r.diagnostics["effect_columns"] = static_cast<double>(dm.m());
  r.diagnostics["dropped_firms"] = static_cast<double>(dm.dropped_firms.size());
  r.config = "effects=" + opt.effects;
  emit(json::to_json(r), opt);
  std::cerr << "beta_hat computed from " << dm.n() << " edges\n";
  return 0;
}

int cmd_decompose(const Options& opt) {
  const NetworkData full = load(opt);
  const NetworkData net = largest_component(full);
  const DesignMatrices dm = build_design(net, Normalization::DropLastFirmPerComponent);
  Json doc;
  doc["component"] = {{"n_edges", net.size()}, {"n_workers", net.n_workers}, {"n_firms", net.n_firms}};
  const Json parts = json::to_json(lin::variance_decomposition(dm.y, dm));
  for (const auto& [key, value] : parts.items()) doc[key] = value;
  emit(doc, opt);
  std::cerr << "decomposed largest component (" << net.size() << " edges)\n";
  return 0;
}

logit::GmmOptions gmm_options(const Options& opt) {
  logit::GmmOptions g;
  if (opt.weight == "twostep") g.weight = logit::WeightRule::TwoStep;
  else if (opt.weight != "identity") fail(ErrorCode::InvalidArgument, "--weight must be identity or twostep");
  g.bootstrap_reps = opt.reps;
  g.seed = seed_or(opt, 1);
  if (opt.tol) g.tol = *opt.tol;
  return g;
}

int cmd_estimate_logit(const Options& opt) {
  const NetworkData net = load(opt);
  const auto blocks = logit_blocks(net, opt.pattern);
  std::cerr << "found " << blocks.size() << " " << opt.pattern << " blocks\n";
  EstimateResult r = logit::estimate_theta_gmm(blocks, gmm_options(opt));
  r.config = "pattern=" + opt.pattern + ";weight=" + opt.weight;
  emit(json::to_json(r), opt);
  return 0;
}

// Enumeration needs the whole network as one block; refuse before building it.
void check_cap(const NetworkData& net, int cap, const char* where) {
  if (static_cast<int>(net.size()) > cap) {
    fail(ErrorCode::CapExceeded, std::string(where) + ": " + std::to_string(net.size()) +
                                     " edges exceed the enumeration cap of " + std::to_string(cap));
  }
}

int cmd_discover(const Options& opt) {
  const NetworkData net = load(opt);
  check_cap(net, opt.cap, "discover");
  const DesignMatrices dm = build_design(net, Normalization::None);
  const Vector theta = parse_theta(opt.theta, "discover");
  const auto moments = logit::discover_moments(dm, theta, opt.cap);
  const auto levels = logit::sufficient_levels(dm, opt.cap);
  Json list = Json::array();
  int informative = 0;
  for (const auto& phi : moments) {
    if (phi.informative) ++informative;
    list.push_back(json::to_json(phi));
  }
  Json doc;
  doc["n"] = dm.n();
  doc["theta"] = json::to_json(theta);
  doc["levels"] = levels.levels.size();
  doc["restrictions"] = moments.size();
  doc["informative"] = informative;
  doc["moments"] = list;
  emit(doc, opt);
  std::cerr << informative << " informative of " << moments.size() << " restrictions\n";
  return 0;
}

int cmd_verify(const Options& opt) {
  const NetworkData net = load(opt);
  const Vector theta = parse_theta(opt.theta, "verify");
  const int draws = opt.reps > 0 ? opt.reps : 20;
  std::mt19937_64 rng(seed_or(opt, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  Json checks = Json::array();
  double worst = 0.0;
  double tol = 0.0;
  auto record = [&](const std::string& name, double dev) {
    checks.push_back({{"check", name}, {"max_deviation", dev}});
    worst = std::max(worst, dev);
  };

  if (opt.model == "logit") {
    tol = opt.tol.value_or(1e-10);
    check_cap(net, opt.cap, "verify");
    const DesignMatrices dm = build_design(net, Normalization::None);
    const auto moments = logit::discover_moments(dm, theta, opt.cap);
    std::vector<Vector> grid;
    for (int d = 0; d < draws; ++d) grid.push_back(Vector::NullaryExpr(dm.m(), [&]() { return normal(rng); }));
    for (std::size_t s = 0; s < moments.size(); ++s) {
      double dev = std::abs(logit::level_residual(moments[s], dm, theta));
      for (const auto& a : grid) {
        dev = std::max(dev, std::abs(logit::brute_force_expectation(moments[s], dm, a, theta, opt.cap)));
      }
      record("moment[" + std::to_string(s) + "]", dev);
    }
  } else if (opt.model == "linear") {
    tol = opt.tol.value_or(1e-9);
    const DesignMatrices dm = build_design(largest_component(net), Normalization::DropLastFirmPerComponent);
    lin::LinearParams params{theta, opt.sigma2};
    const auto phi_b = lin::phi_beta_functional(dm, params.beta);
    const auto phi_s = lin::phi_sigma2_functional(dm, params);
    const lin::QuadraticForm q = lin::firm_variance_form(dm);
    const auto psi = lin::psi_quadratic_functional(dm, params, q);
    double dev_b = 0, dev_s = 0, dev_q = 0;
    for (int d = 0; d < draws; ++d) {
      const Vector a = Vector::NullaryExpr(dm.m(), [&]() { return normal(rng); });
      dev_b = std::max(dev_b, lin::gaussian_conditional_expectation(phi_b, dm, a, params).cwiseAbs().maxCoeff());
      dev_s = std::max(dev_s, std::abs(lin::gaussian_conditional_expectation(phi_s, dm, a, params)(0)));
      dev_q = std::max(dev_q, std::abs(lin::gaussian_conditional_expectation(psi, dm, a, params)(0) -
                                       q.evaluate(a)));
    }
    record("phi_beta", dev_b);
    record("phi_sigma2", dev_s);
    record("psi_var_firm", dev_q);
  } else {
    fail(ErrorCode::InvalidArgument, "--model must be logit or linear");
  }

  const bool passed = worst <= tol;
  Json doc;
  doc["model"] = opt.model;
  doc["theta"] = json::to_json(theta);
  doc["draws"] = draws;
  doc["checks"] = checks;
  doc["max_deviation"] = worst;
  doc["tol"] = tol;
  doc["passed"] = passed;
  emit(doc, opt);
  std::cerr << (passed ? "verification passed" : "verification FAILED") << " (max deviation "
            << worst << ")\n";
  return passed ? 0 : 1;
}

int cmd_ape(const Options& opt) {
  const NetworkData net = load(opt);
  if (net.n_covariates == 0) fail(ErrorCode::InvalidArgument, "ape needs a binary covariate x1");
  std::vector<ape::PanelPair> pairs;
  for (const auto& edges : two_period_workers(net)) {
    ape::PanelPair p;
    for (int t = 0; t < 2; ++t) {
      const Edge& e = net.edges[edges[t]];
      if ((e.y != 0.0 && e.y != 1.0) || (e.x[0] != 0.0 && e.x[0] != 1.0)) {
        fail(ErrorCode::InvalidArgument, "ape: outcomes and the first covariate must be binary");
      }
      p.y[t] = static_cast<int>(e.y);
      p.x[t] = static_cast<int>(e.x[0]);
    }
    pairs.push_back(p);
  }
  double theta_hat = 0.0;
  std::string source = "flag";
  if (!opt.theta.empty()) {
    theta_hat = parse_theta(opt.theta, "ape")(0);
  } else {
    if (net.n_covariates != 1) fail(ErrorCode::InvalidArgument, "ape: pass --theta with several covariates");
    theta_hat = logit::estimate_theta_gmm(logit_blocks(net, "panel"), gmm_options(opt)).scalar();
    source = "conditional logit";
  }
  EstimateResult r = ape::estimate_ape_movers(pairs, theta_hat);
  r.config = "theta from " + source;
  emit(json::to_json(r), opt);
  std::cerr << "APE over " << r.n << " movers\n";
  return 0;
}

int cmd_certify(const Options& opt) {
  ape::TargetEffect target{ape::target_kind_from_string(opt.target),
                           parse_theta(opt.theta, "certify-impossible")(0)};
  ape::GridSpec grid;
  if (target.kind == ape::TargetKind::ConfigC_APE) grid.points = 9;
  if (opt.points > 0 && opt.points != 81) grid.points = opt.points;
  const auto report = ape::certify_impossibility(target, grid, opt.tol.value_or(1e-6));
  emit(json::to_json(report), opt);
  std::cerr << ape::to_string(target.kind) << ": " << report.verdict << " (residual "
            << report.residual << ")\n";
  return 0;
}

int cmd_mc(const Options& opt) {
  sim::SimConfig config = sim::load_config_file(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  const auto summary = sim::mc_study(config, sim::estimator_from_string(opt.estimator), opt.reps);
  emit(json::to_json(summary), opt);
  std::cerr << summary.estimator << ": bias " << summary.bias << " (mc_se " << summary.mc_se
            << ", " << summary.n_failed << " failed)\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Functional differencing for network data"};
  app.require_subcommand(1);
  Options opt;

  auto add_input = [&](CLI::App* sub) {
    sub->add_option("--input", opt.input, "edge-list CSV")->required()->check(CLI::ExistingFile);
  };
  auto add_output = [&](CLI::App* sub) { sub->add_option("--output", opt.output, "JSON output path"); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", opt.seed, "random seed"); };

  auto* simulate = app.add_subcommand("simulate", "simulate a network and write it as CSV");
  simulate->add_option("--config", opt.config, "key = value config file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--output", opt.output, "CSV output path")->required();
  add_seed(simulate);

  auto* est_lin = app.add_subcommand("estimate-linear", "quasi-differencing estimate of beta");
  add_input(est_lin);
  add_output(est_lin);
  est_lin->add_option("--effects", opt.effects, "worker, firm or worker,firm")
      ->check(CLI::IsMember({"worker", "firm", "worker,firm", "firm,worker"}));

  auto* decompose = app.add_subcommand("decompose", "bias-corrected variance decomposition");
  add_input(decompose);
  add_output(decompose);

  auto* est_logit = app.add_subcommand("estimate-logit", "GMM estimate of theta");
  add_input(est_logit);
  add_output(est_logit);
  add_seed(est_logit);
  est_logit->add_option("--pattern", opt.pattern, "C, F, tetrad or panel")
      ->check(CLI::IsMember({"C", "F", "tetrad", "panel"}));
  est_logit->add_option("--reps", opt.reps, "block bootstrap replications")->check(CLI::NonNegativeNumber);
  est_logit->add_option("--weight", opt.weight, "identity or twostep")
      ->check(CLI::IsMember({"identity", "twostep"}));
  est_logit->add_option("--tol", opt.tol, "optimizer tolerance");

  auto* discover = app.add_subcommand("discover", "enumerate moment restrictions");
  add_input(discover);
  add_output(discover);
  discover->add_option("--theta", opt.theta, "theta (comma-separated)")->required();
  discover->add_option("--cap", opt.cap, "enumeration cap")->check(CLI::Range(1, 30));

  auto* verify = app.add_subcommand("verify", "check conditional-mean-zero restrictions");
  add_input(verify);
  add_output(verify);
  add_seed(verify);
  verify->add_option("--theta", opt.theta, "theta or beta (comma-separated)")->required();
  verify->add_option("--model", opt.model, "logit or linear")->check(CLI::IsMember({"logit", "linear"}));
  verify->add_option("--tol", opt.tol, "maximum allowed deviation");
  verify->add_option("--cap", opt.cap, "enumeration cap")->check(CLI::Range(1, 30));
  verify->add_option("--reps", opt.reps, "random heterogeneity draws")->check(CLI::NonNegativeNumber);
  verify->add_option("--sigma2", opt.sigma2, "noise variance (linear)");

  auto* ape_cmd = app.add_subcommand("ape", "movers' average partial effect");
  add_input(ape_cmd);
  add_output(ape_cmd);
  add_seed(ape_cmd);
  ape_cmd->add_option("--theta", opt.theta, "theta (estimated by conditional logit if absent)");

  auto* certify = app.add_subcommand("certify-impossible", "least-squares impossibility certificate");
  add_output(certify);
  certify->add_option("--target", opt.target, "movers, stayers or configc")
      ->required()
      ->check(CLI::IsMember({"movers", "stayers", "configc"}));
  certify->add_option("--theta", opt.theta, "theta (nonzero)")->required();
  certify->add_option("--tol", opt.tol, "residual threshold");
  certify->add_option("--points", opt.points, "grid points per main axis")->check(CLI::PositiveNumber);

  auto* mc = app.add_subcommand("mc", "Monte Carlo study");
  add_output(mc);
  add_seed(mc);
  mc->add_option("--config", opt.config, "key = value config file")->required()->check(CLI::ExistingFile);
  mc->add_option("--reps", opt.reps, "replications")->required()->check(CLI::Range(2, 100000000));
  mc->add_option("--estimator", opt.estimator, "estimator name")
      ->check(CLI::IsMember({"beta", "sigma2", "var_firm", "var_firm_plugin", "var_worker",
                             "cov_worker_firm"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opt);
    if (est_lin->parsed()) return cmd_estimate_linear(opt);
    if (decompose->parsed()) return cmd_decompose(opt);
    if (est_logit->parsed()) return cmd_estimate_logit(opt);
    if (discover->parsed()) return cmd_discover(opt);
    if (verify->parsed()) return cmd_verify(opt);
    if (ape_cmd->parsed()) return cmd_ape(opt);
    if (certify->parsed()) return cmd_certify(opt);
    if (mc->parsed()) return cmd_mc(opt);
  } catch (const Error& e) {
    Json err{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace fdnet::cli
