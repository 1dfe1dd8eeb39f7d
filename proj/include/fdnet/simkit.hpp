#pragma once

// Simulated worker-firm networks with correlated heterogeneity, linear and
// logit outcomes, independent logit blocks, and a Monte Carlo harness.

#include "fdnet/logitmodel.hpp"
#include "fdnet/netcore.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fdnet::sim {

using linalg::Vector;

enum class Law { Normal, TwoPoint };
enum class Model { Linear, Logit };
/// Edge covariates drawn iid N(0,1), or one Bernoulli(1/2) attribute per
/// worker spell (constant while the worker stays at a firm).
enum class CovariateLaw { EdgeNormal, SpellBinary };

struct SimConfig {
  int n_workers = 1000;
  int n_firms = 100;
  int n_periods = 2;
  double mover_share = 0.1;
  // Heterogeneity law, applied to worker and firm effects alike. Normal maps
  // a standard score u to mean + sd u; TwoPoint maps it to low (u < 0) or
  // high (u >= 0).
  Law law = Law::Normal;
  double effect_mean = 0.0;
  double effect_sd = 1.0;
  double low = -1.0;
  double high = 1.0;
  double sorting = 0.0;  // correlation of worker and first-firm scores
  Model model = Model::Linear;
  std::vector<double> beta{1.0};
  double sigma2 = 1.0;
  std::vector<double> theta{1.0};
  CovariateLaw covariates = CovariateLaw::EdgeNormal;
  std::uint64_t seed = 1;

  int n_covariates() const {
    return static_cast<int>(model == Model::Linear ? beta.size() : theta.size());
  }
};

/// Throws InfeasibleConfig on out-of-range values (for example movers
/// requested with a single firm).
void validate(const SimConfig& config);

/// `key = value` lines; '#' starts a comment, [sections] are ignored.
/// Keys: n_workers n_firms n_periods mover_share law effect_mean effect_sd
/// low high sorting model beta sigma2 theta covariates seed. Lists are
/// comma-separated.
SimConfig parse_config(std::istream& in);
SimConfig load_config_file(const std::string& path);

struct SimTruth {
  Vector worker_effect;  // per dense worker id
  Vector firm_effect;    // per dense firm id
  SimConfig config;
};

struct Simulation {
  NetworkData net;
  SimTruth truth;
};

/// Counter-based sub-seed: independent streams from one base seed.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic in config.seed. Mobility and covariates use one RNG stream,
/// outcome noise another, so regenerate_outcomes keeps the network fixed.
Simulation simulate(const SimConfig& config);
NetworkData regenerate_outcomes(const Simulation& sim, std::uint64_t noise_seed);

/// Edge-weighted moments of the true effects over a network's edges.
struct TrueMoments {
  double var_worker = 0.0;
  double var_firm = 0.0;
  double cov_worker_firm = 0.0;
};
TrueMoments true_moments(const NetworkData& net, const Vector& worker_effect,
                         const Vector& firm_effect);

enum class BlockKind { MoverPanel, ConfigC, ConfigF, Tetrad };

/// Independent logit data blocks: effects iid N(0,1) per unit, covariates
/// iid N(0,1) per row (MoverPanel: a binary covariate that switches).
std::vector<logit::DataBlock> simulate_blocks(BlockKind kind, int n_blocks, const Vector& theta,
                                              std::uint64_t seed);

enum class Estimator { Beta, Sigma2, VarFirm, VarFirmPlugIn, VarWorker, CovWorkerFirm };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& name);

struct McSummary {
  std::string estimator;
  int n_reps = 0;
  int n_ok = 0;
  int n_failed = 0;
  double mean = 0.0;
  double mean_truth = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mc_se = 0.0;
  std::map<std::string, int> failures;  // error code -> count
  std::uint64_t seed = 0;
};

/// Replication r simulates with seed config.seed + r. Linear estimators run
/// on the largest connected component with the last firm dropped; the truth
/// of a replication is the corresponding moment of the true effects over
/// the same edges. sd is the spread of the estimates; bias and mc_se refer to
/// estimate minus truth. Estimator failures are counted, not thrown.
McSummary mc_study(const SimConfig& config, Estimator estimator, int n_reps);

}  // namespace fdnet::sim
