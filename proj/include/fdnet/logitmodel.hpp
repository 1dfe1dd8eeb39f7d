#pragma once

// Logit network model y = 1{x1 a + x2 theta + eps > 0}, eps iid logistic.
//
// Because S = x1'y is sufficient for a, a function phi of the outcomes has
// conditional mean zero for every a iff, on every level set {y : x1'y = s},
//   sum_y phi(y) exp(y'x2 theta) = 0.
// Discovery enumerates the level sets and returns the null space of that
// single weight row per level; closed forms cover conditional logit, tetrad
// logit and the two informative worker-firm configurations (C and F).

#include "fdnet/netcore.hpp"
#include "fdnet/result.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fdnet::logit {

using linalg::Matrix;
using linalg::Vector;

/// Binary outcome vector packed most-significant-bit first: y_0 is bit n-1,
/// so numeric order equals lexicographic order of (y_0, ..., y_{n-1}).
using OutcomeCode = std::uint64_t;

inline constexpr int kDefaultCap = 20;

inline int outcome_bit(OutcomeCode y, int i, int n) {
  return static_cast<int>((y >> (n - 1 - i)) & 1u);
}
OutcomeCode encode_outcome(const std::vector<int>& y);
std::vector<int> decode_outcome(OutcomeCode y, int n);
std::string to_bitstring(OutcomeCode y, int n);
/// Throws InvalidArgument unless y is a 0/1 vector.
OutcomeCode encode_outcome(const Vector& y);

/// Sum_i [y_i eta_i - log(1 + exp(eta_i))], eta = x1 a + x2 theta.
double loglik(const Vector& y, const DesignMatrices& dm, const Vector& a, const Vector& theta);
double loglik(OutcomeCode y, const DesignMatrices& dm, const Vector& a, const Vector& theta);

using LevelKey = std::vector<long>;

struct LevelSetIndex {
  int n = 0;
  std::map<LevelKey, std::vector<OutcomeCode>> levels;

  std::size_t total_outcomes() const;
};

/// Exhaustive level sets of s = x1'y over {0,1}^n. Throws CapExceeded when
/// n > cap.
LevelSetIndex sufficient_levels(const Eigen::MatrixXi& x1, int cap = kDefaultCap);
LevelSetIndex sufficient_levels(const DesignMatrices& dm, int cap = kDefaultCap);

enum class ClosedForm { CondLogit, Tetrad, ConfigC, ConfigF };
std::string to_string(ClosedForm form);

/// Finitely supported phi over {0,1}^n, zero off the support.
struct MomentFunction {
  int n = 0;
  std::vector<OutcomeCode> support;  // ascending
  std::vector<double> coeffs;
  LevelKey level_key;
  Vector theta_at;
  std::optional<ClosedForm> closed_form;
  bool informative = true;  // false when y'x2 is constant on the support

  double operator()(OutcomeCode y) const;
  /// Coefficients over the whole outcome space (length 2^n).
  Vector dense() const;
};

/// sum over the support of coeff * exp(y'x2 theta); zero for valid moments.
double level_residual(const MomentFunction& phi, const DesignMatrices& dm, const Vector& theta);

/// One MomentFunction per null-space direction of every level set with at
/// least two members. Each level's basis is in reduced row echelon form over
/// lexicographically ordered outcomes (leading coefficient +1). Levels where
/// y'x2 is constant are returned with informative = false.
std::vector<MomentFunction> discover_moments(const DesignMatrices& dm, const Vector& theta,
                                             int cap = kDefaultCap);

/// True iff some level set has at least two members with different y'x2,
/// i.e. the design carries moment restrictions that depend on theta.
bool has_informative_restrictions(const DesignMatrices& dm, int cap = kDefaultCap);

/// Conditional logit on a T = 2 block, x is 2 x k:
/// phi(1,0) = exp(x_2'theta), phi(0,1) = -exp(x_1'theta), zero otherwise.
double phi_conditional_logit(std::array<int, 2> y, const Matrix& x, const Vector& theta);

struct TetradCase {
  enum class Kind { AllOnes, AllTwos, TwoTwoOneOne };
  Kind kind = Kind::AllOnes;
  /// Agents (0..3 for i, j, k, l) with degree 2 in the TwoTwoOneOne case.
  std::array<int, 2> high_degree{0, 1};
  /// Which null-space direction (three-member levels have two).
  int component = 0;
};

/// Level members of a tetrad degree-sequence case, ascending. Dyads are in
/// the order (ij, ik, il, jk, jl, kl).
std::vector<OutcomeCode> tetrad_level(const TetradCase& c);

/// Tetrad-logit moment function on the six dyads of a tetrad; x is 6 x k.
/// Coefficients follow the same echelon normalization as discover_moments.
double phi_tetrad(std::array<int, 6> y, const Matrix& x, const Vector& theta, const TetradCase& c);

/// Configuration C, y and x ordered (i@j, i@j', i'@j, i'@j').
double phi_config_c(std::array<int, 4> y, const Matrix& x, const Vector& theta);

/// Configuration F, y and x ordered around the firm loop
/// (i@j, i@j', i'@j', i'@j'', i''@j'', i''@j).
double phi_config_f(std::array<int, 6> y, const Matrix& x, const Vector& theta);

// The same families packaged as MomentFunctions over their block.
MomentFunction conditional_logit_moment(const Matrix& x, const Vector& theta);
MomentFunction tetrad_moment(const Matrix& x, const Vector& theta, const TetradCase& c);
MomentFunction config_c_moment(const Matrix& x, const Vector& theta);
MomentFunction config_f_moment(const Matrix& x, const Vector& theta);

// Block designs whose x1 rows match the orderings above.
DesignMatrices panel_design(const Matrix& x, const Vector& y = {});
DesignMatrices tetrad_design(const Matrix& x, const Vector& y = {});
DesignMatrices config_c_design(const Matrix& x, const Vector& y = {});
DesignMatrices config_f_design(const Matrix& x, const Vector& y = {});

/// P(Y = y | x, a) under the logit model.
double outcome_probability(OutcomeCode y, const DesignMatrices& dm, const Vector& a,
                           const Vector& theta);

/// Sum over all y in {0,1}^n of phi(y) f(y | x, a). Throws CapExceeded.
double brute_force_expectation(const std::function<double(OutcomeCode)>& phi,
                               const DesignMatrices& dm, const Vector& a, const Vector& theta,
                               int cap = kDefaultCap);
double brute_force_expectation(const MomentFunction& phi, const DesignMatrices& dm,
                               const Vector& a, const Vector& theta, int cap = kDefaultCap);

/// Produces the moment functions of one data block at a given theta.
using MomentSetBuilder =
    std::function<std::vector<MomentFunction>(const DesignMatrices&, const Vector&)>;

MomentSetBuilder config_c_builder();
MomentSetBuilder config_f_builder();
MomentSetBuilder conditional_logit_builder();
/// Every tetrad case and component (AllOnes, AllTwos and the six
/// TwoTwoOneOne permutations).
MomentSetBuilder tetrad_builder();
/// Numeric discovery on the block design; works for any small block.
MomentSetBuilder discovered_builder(int cap = kDefaultCap);

struct DataBlock {
  DesignMatrices dm;  // dm.y holds the observed outcomes
  MomentSetBuilder builder;
  std::string label;
};

enum class WeightRule { Identity, TwoStep };

struct GmmOptions {
  WeightRule weight = WeightRule::Identity;
  double lower = -5.0;  // scalar search interval
  double upper = 5.0;
  int grid_points = 41;
  double tol = 1e-9;
  int max_iter = 2000;
  int bootstrap_reps = 0;
  std::uint64_t seed = 1;
};

/// Per-slot sums over blocks of each informative moment evaluated at the
/// observed outcomes. Each moment is scaled to unit absolute coefficient sum
/// with a positive leading coefficient, so rescaling a block's moments leaves
/// the criterion unchanged, and is multiplied by the instrument
/// y'x2 at the first support point minus y'x2 at the last. Slots are keyed
/// `label#index`, with a `[j]` suffix per covariate when k > 1. On a T = 2
/// panel this is the conditional-logit score.
std::map<std::string, double> stacked_moments(const std::vector<DataBlock>& blocks,
                                              const Vector& theta);

/// g' W g / B^2 with g the stacked moments (identity weight).
double gmm_criterion(const std::vector<DataBlock>& blocks, const Vector& theta);

/// argmin_theta of the criterion: grid search plus golden-section for scalar
/// theta, Nelder-Mead otherwise. Throws NoInformativeBlocks or
/// NonConvergence. bootstrap_reps > 0 adds block-bootstrap standard errors.
EstimateResult estimate_theta_gmm(const std::vector<DataBlock>& blocks,
                                  const GmmOptions& options = {});

}  // namespace fdnet::logit
