#include "fdnet/simkit.hpp"

#include "fdnet/error.hpp"
#include "fdnet/linmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace fdnet::sim {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"'");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\"'");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "config: '" + key + "' expects a number, got '" + value + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (v != std::floor(v)) fail(ErrorCode::InvalidArgument, "config: '" + key + "' must be an integer");
  return static_cast<long long>(v);
}

std::vector<double> parse_list(const std::string& key, std::string value) {
  if (!value.empty() && value.front() == '[') value.erase(0, 1);
  if (!value.empty() && value.back() == ']') value.pop_back();
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

double score_to_effect(double u, const SimConfig& c) {
  if (c.law == Law::TwoPoint) return u < 0.0 ? c.low : c.high;
  return c.effect_mean + c.effect_sd * u;
}

double draw_logistic_outcome(double eta, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double p = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  return unif(rng) < p ? 1.0 : 0.0;
}

void fill_outcomes(NetworkData& net, const SimTruth& truth, std::uint64_t noise_seed) {
  const SimConfig& c = truth.config;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(c.sigma2);
  for (Edge& e : net.edges) {
    double eta = truth.worker_effect(e.worker) + truth.firm_effect(e.firm);
    const auto& coef = c.model == Model::Linear ? c.beta : c.theta;
    for (std::size_t j = 0; j < coef.size(); ++j) eta += coef[j] * e.x[j];
    e.y = c.model == Model::Linear ? eta + sd * normal(rng) : draw_logistic_outcome(eta, rng);
  }
}

}  // namespace

void validate(const SimConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InfeasibleConfig, "config: " + what); };
  if (c.n_workers < 1) bad("n_workers must be >= 1");
  if (c.n_firms < 1) bad("n_firms must be >= 1");
  if (c.n_periods < 1) bad("n_periods must be >= 1");
  if (!(c.mover_share >= 0.0 && c.mover_share <= 1.0)) bad("mover_share must lie in [0, 1]");
  if (c.mover_share > 0.0 && c.n_firms < 2) bad("movers need at least two firms");
  if (c.mover_share > 0.0 && c.n_periods < 2) bad("movers need at least two periods");
  if (!(c.sorting >= -1.0 && c.sorting <= 1.0)) bad("sorting must lie in [-1, 1]");
  if (!(c.effect_sd >= 0.0)) bad("effect_sd must be >= 0");
  if (c.model == Model::Linear && !(c.sigma2 > 0.0)) bad("sigma2 must be > 0");
  if (c.model == Model::Linear && c.beta.empty()) bad("linear model needs beta");
  if (c.model == Model::Logit && c.theta.empty()) bad("logit model needs theta");
}

SimConfig parse_config(std::istream& in) {
  SimConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "n_workers") c.n_workers = static_cast<int>(parse_integer(key, value));
    else if (key == "n_firms") c.n_firms = static_cast<int>(parse_integer(key, value));
    else if (key == "n_periods") c.n_periods = static_cast<int>(parse_integer(key, value));
    else if (key == "mover_share") c.mover_share = parse_double(key, value);
    else if (key == "law") {
      if (value == "normal") c.law = Law::Normal;
      else if (value == "two_point" || value == "two-point") c.law = Law::TwoPoint;
      else fail(ErrorCode::InvalidArgument, "config: law must be normal or two_point");
    } else if (key == "effect_mean") c.effect_mean = parse_double(key, value);
    else if (key == "effect_sd") c.effect_sd = parse_double(key, value);
    else if (key == "low") c.low = parse_double(key, value);
    else if (key == "high") c.high = parse_double(key, value);
    else if (key == "sorting") c.sorting = parse_double(key, value);
    else if (key == "model") {
      if (value == "linear") c.model = Model::Linear;
      else if (value == "logit") {
        c.model = Model::Logit;
        c.covariates = CovariateLaw::SpellBinary;
      } else fail(ErrorCode::InvalidArgument, "config: model must be linear or logit");
    } else if (key == "beta") c.beta = parse_list(key, value);
    else if (key == "sigma2") c.sigma2 = parse_double(key, value);
    else if (key == "theta") c.theta = parse_list(key, value);
    else if (key == "covariates") {
      if (value == "edge_normal") c.covariates = CovariateLaw::EdgeNormal;
      else if (value == "spell_binary") c.covariates = CovariateLaw::SpellBinary;
      else fail(ErrorCode::InvalidArgument, "config: covariates must be edge_normal or spell_binary");
    } else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    else fail(ErrorCode::InvalidArgument, "config: unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

SimConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open config file '" + path + "'");
  return parse_config(in);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Simulation simulate(const SimConfig& config) {
  validate(config);
  std::mt19937_64 rng(substream_seed(config.seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_firm(0, config.n_firms - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  Simulation sim;
  sim.truth.config = config;
  const int k = config.n_covariates();

  std::vector<double> firm_score(config.n_firms);
  sim.truth.firm_effect.resize(config.n_firms);
  for (int j = 0; j < config.n_firms; ++j) {
    firm_score[j] = normal(rng);
    sim.truth.firm_effect(j) = score_to_effect(firm_score[j], config);
  }

  const double rho = config.sorting;
  const double rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  sim.truth.worker_effect.resize(config.n_workers);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(config.n_workers) * config.n_periods);
  std::vector<double> kernel(config.n_firms);
  for (int i = 0; i < config.n_workers; ++i) {
    const int first = pick_firm(rng);
    const double z = rho * firm_score[first] + rest * normal(rng);
    sim.truth.worker_effect(i) = score_to_effect(z, config);

    int second = first;
    int move_at = config.n_periods;
    if (config.mover_share > 0.0 && unif(rng) < config.mover_share) {
      // Destination kernel favors firms whose score is close to rho z.
      for (int j = 0; j < config.n_firms; ++j) {
        const double d = firm_score[j] - rho * z;
        kernel[j] = j == first ? 0.0 : std::exp(-0.5 * d * d);
      }
      std::discrete_distribution<int> pick_dest(kernel.begin(), kernel.end());
      second = pick_dest(rng);
      move_at = 1 + std::uniform_int_distribution<int>(0, config.n_periods - 2)(rng);
    }
    std::array<std::vector<double>, 2> spell_attr;
    if (config.covariates == CovariateLaw::SpellBinary) {
      for (auto& attr : spell_attr) {
        attr.resize(k);
        for (double& v : attr) v = coin(rng) ? 1.0 : 0.0;
      }
    }
    for (int t = 0; t < config.n_periods; ++t) {
      Edge e;
      e.worker = i;
      e.firm = t < move_at ? first : second;
      e.period = t;
      if (config.covariates == CovariateLaw::SpellBinary) {
        e.x = spell_attr[t < move_at ? 0 : 1];
      } else {
        e.x.resize(k);
        for (double& v : e.x) v = normal(rng);
      }
      edges.push_back(std::move(e));
    }
  }
  sim.net = make_network(std::move(edges), config.n_workers, config.n_firms, config.n_periods);
  fill_outcomes(sim.net, sim.truth, substream_seed(config.seed, 2));
  return sim;
}

NetworkData regenerate_outcomes(const Simulation& sim, std::uint64_t noise_seed) {
  NetworkData net = sim.net;
  fill_outcomes(net, sim.truth, substream_seed(noise_seed, 2));
  return net;
}

TrueMoments true_moments(const NetworkData& net, const Vector& worker_effect,
                         const Vector& firm_effect) {
  TrueMoments out;
  const double n = static_cast<double>(net.edges.size());
  if (n == 0) return out;
  double sw = 0, sf = 0, sww = 0, sff = 0, swf = 0;
  for (const Edge& e : net.edges) {
    const double w = worker_effect(net.worker_ids[e.worker]);
    const double f = firm_effect(net.firm_ids[e.firm]);
    sw += w;
    sf += f;
    sww += w * w;
    sff += f * f;
    swf += w * f;
  }
  out.var_worker = sww / n - (sw / n) * (sw / n);
  out.var_firm = sff / n - (sf / n) * (sf / n);
  out.cov_worker_firm = swf / n - (sw / n) * (sf / n);
  return out;
}

std::vector<logit::DataBlock> simulate_blocks(BlockKind kind, int n_blocks, const Vector& theta,
                                              std::uint64_t seed) {
  if (n_blocks < 0) fail(ErrorCode::InvalidArgument, "simulate_blocks: negative block count");
  std::mt19937_64 rng(substream_seed(seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const Eigen::Index k = theta.size();

  std::vector<logit::DataBlock> blocks;
  blocks.reserve(static_cast<std::size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    logit::DataBlock block;
    linalg::Matrix x;
    switch (kind) {
      case BlockKind::MoverPanel: {
        x = linalg::Matrix::Zero(2, k);
        const int first = coin(rng) ? 1 : 0;
        x.row(0).setConstant(first);
        x.row(1).setConstant(1 - first);
        block.dm = logit::panel_design(x);
        block.builder = logit::conditional_logit_builder();
        block.label = "panel";
        break;
      }
      case BlockKind::ConfigC:
        x = linalg::Matrix::NullaryExpr(4, k, [&]() { return normal(rng); });
        block.dm = logit::config_c_design(x);
        block.builder = logit::config_c_builder();
        block.label = "C";
        break;
      case BlockKind::ConfigF:
        x = linalg::Matrix::NullaryExpr(6, k, [&]() { return normal(rng); });
        block.dm = logit::config_f_design(x);
        block.builder = logit::config_f_builder();
        block.label = "F";
        break;
      case BlockKind::Tetrad:
        x = linalg::Matrix::NullaryExpr(6, k, [&]() { return normal(rng); });
        block.dm = logit::tetrad_design(x);
        block.builder = logit::tetrad_builder();
        block.label = "tetrad";
        break;
    }
    const Vector a = Vector::NullaryExpr(block.dm.m(), [&]() { return normal(rng); });
    const Vector eta = block.dm.x1 * a + block.dm.x2 * theta;
    Vector y(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) y(i) = draw_logistic_outcome(eta(i), rng);
    block.dm = block.dm.with_outcome(std::move(y));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Beta: return "beta";
    case Estimator::Sigma2: return "sigma2";
    case Estimator::VarFirm: return "var_firm";
    case Estimator::VarFirmPlugIn: return "var_firm_plugin";
    case Estimator::VarWorker: return "var_worker";
    case Estimator::CovWorkerFirm: return "cov_worker_firm";
  }
  return "?";
}

Estimator estimator_from_string(const std::string& name) {
  for (auto e : {Estimator::Beta, Estimator::Sigma2, Estimator::VarFirm, Estimator::VarFirmPlugIn,
                 Estimator::VarWorker, Estimator::CovWorkerFirm}) {
    if (to_string(e) == name) return e;
  }
  fail(ErrorCode::InvalidArgument,
       "unknown estimator '" + name +
           "' (beta, sigma2, var_firm, var_firm_plugin, var_worker, cov_worker_firm)");
}

namespace {

struct Draw {
  double estimate;
  double truth;
};

Draw run_estimator(Estimator est, const Simulation& sim) {
  const SimConfig& c = sim.truth.config;
  const NetworkData net = largest_component(sim.net);
  const DesignMatrices dm = build_design(net, Normalization::DropLastFirmPerComponent);
  const TrueMoments truth = true_moments(net, sim.truth.worker_effect, sim.truth.firm_effect);
  switch (est) {
    case Estimator::Beta:
      return {lin::estimate_beta(dm.y, dm)(0), c.beta.front()};
    case Estimator::Sigma2:
      return {lin::estimate_sigma2(dm.y, dm, lin::estimate_beta(dm.y, dm)), c.sigma2};
    case Estimator::VarFirm:
      return {lin::estimate_quadratic_form(dm.y, dm, lin::firm_variance_form(dm)).scalar(),
              truth.var_firm};
    case Estimator::VarFirmPlugIn:
      return {lin::estimate_quadratic_form(dm.y, dm, lin::firm_variance_form(dm))
                  .diagnostics.at("plug_in"),
              truth.var_firm};
    case Estimator::VarWorker:
      return {lin::estimate_quadratic_form(dm.y, dm, lin::worker_variance_form(dm)).scalar(),
              truth.var_worker};
    case Estimator::CovWorkerFirm:
      return {lin::estimate_quadratic_form(dm.y, dm, lin::worker_firm_covariance_form(dm)).scalar(),
              truth.cov_worker_firm};
  }
  fail(ErrorCode::UnknownCase, "mc_study: unknown estimator");
}

}  // namespace

McSummary mc_study(const SimConfig& config, Estimator estimator, int n_reps) {
  if (n_reps < 2) fail(ErrorCode::InvalidArgument, "mc_study: n_reps must be >= 2");
  if (config.model != Model::Linear) {
    fail(ErrorCode::InvalidArgument, "mc_study: estimators require the linear model");
  }
  validate(config);
  McSummary s;
  s.estimator = to_string(estimator);
  s.n_reps = n_reps;
  s.seed = config.seed;
  std::vector<Draw> draws;
  for (int r = 0; r < n_reps; ++r) {
    SimConfig rep = config;
    rep.seed = config.seed + static_cast<std::uint64_t>(r);
    try {
      draws.push_back(run_estimator(estimator, simulate(rep)));
    } catch (const Error& e) {
      ++s.failures[std::string(fdnet::to_string(e.code()))];
    }
  }
  s.n_ok = static_cast<int>(draws.size());
  s.n_failed = n_reps - s.n_ok;
  if (draws.empty()) return s;
  const double n = static_cast<double>(draws.size());
  double sum = 0, sum_truth = 0, sum_err = 0;
  for (const auto& d : draws) {
    sum += d.estimate;
    sum_truth += d.truth;
    sum_err += d.estimate - d.truth;
  }
  s.mean = sum / n;
  s.mean_truth = sum_truth / n;
  s.bias = sum_err / n;
  double ss = 0, ss_err = 0;
  for (const auto& d : draws) {
    ss += (d.estimate - s.mean) * (d.estimate - s.mean);
    const double err = d.estimate - d.truth - s.bias;
    ss_err += err * err;
  }
  if (draws.size() > 1) {
    s.sd = std::sqrt(ss / (n - 1));
    s.mc_se = std::sqrt(ss_err / (n - 1) / n);
  }
  return s;
}

}  // namespace fdnet::sim
