#pragma once

// Average partial effects in the binary logit model: the movers' APE and its
// valid psi functions, enumeration checks of E[psi | a] = m(a), and a
// least-squares certificate that no psi exists for stayers or Configuration C.

#include "fdnet/logitmodel.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fdnet::ape {

using linalg::Matrix;
using linalg::Vector;
using logit::OutcomeCode;

enum class TargetKind { MoversAPE, StayersAPE, ConfigC_APE };

std::string to_string(TargetKind kind);
/// Accepts "movers", "stayers", "configc" (and the enum spellings).
TargetKind target_kind_from_string(const std::string& name);

struct TargetEffect {
  TargetKind kind = TargetKind::MoversAPE;
  double theta = 1.0;
};

double logistic(double v);

/// Lambda(theta + a) - Lambda(a).
double m_ape(double a, double theta);

/// m(a) for a target. Panel targets read a(0); ConfigC reads a(0) + a(2)
/// (worker i's effect plus firm j's effect).
double target_value(const TargetEffect& target, const Vector& a);

/// (x2 - x1)(y2 - y1)
double psi_movers_simple(int y1, int y2, int x1, int x2);

/// 1{x1 != x2} [y1 (1 - y2) exp(theta (1 - x1)) - (1 - y1) y2 exp(-theta x2)]
double psi_movers_exp(int y1, int y2, int x1, int x2, double theta);

/// The design a target is posed on: a T = 2 panel with x = (0,1) for movers
/// and (1,1) for stayers; the Configuration C block with x = (0,1,0,1).
DesignMatrices target_design(TargetKind kind);

/// max over the grid of |sum_y psi(y) f(y | x, a) - m(a)|, model at
/// target.theta. Throws CapExceeded.
double verify_psi(const std::function<double(OutcomeCode)>& psi, const TargetEffect& target,
                  const DesignMatrices& dm, const std::vector<Vector>& a_grid,
                  int cap = logit::kDefaultCap);

struct GridSpec {
  double lower = -4.0;
  double upper = 4.0;
  int points = 81;           // per scalar effect (panel) or per (a1, a3) axis
  int nuisance_points = 5;   // per (a2, a4) axis, Configuration C only

  std::vector<double> axis(int n) const;
};

/// Grid of effect vectors for a target's design.
std::vector<Vector> make_grid(TargetKind kind, const GridSpec& spec);

struct CertificationReport {
  TargetEffect target;
  GridSpec grid;
  int equations = 0;
  int unknowns = 0;
  double residual = 0.0;
  double tol = 1e-6;
  std::string verdict;  // "no-solution" or "solution-exists"
  Vector psi;           // least-squares solution over the outcome space
};

/// Solves sum_y psi(y) f(y | x, a_g) = m(a_g) over the grid in least squares
/// and reports the residual 2-norm. A residual above tol certifies that no
/// psi exists. Throws InvalidArgument for theta = 0.
CertificationReport certify_impossibility(const TargetEffect& target, const DesignMatrices& dm,
                                          const std::vector<Vector>& a_grid, double tol = 1e-6,
                                          int cap = logit::kDefaultCap);
CertificationReport certify_impossibility(const TargetEffect& target, const GridSpec& grid = {},
                                          double tol = 1e-6);

/// One T = 2 observation: binary outcomes and a binary covariate.
struct PanelPair {
  std::array<int, 2> y{};
  std::array<int, 2> x{};
};

/// Mean of psi_movers_exp at theta_hat over mover pairs (x1 != x2), with the
/// theta-free psi_movers_simple mean as a cross-check in the components.
/// Throws NoMoverBlocks.
EstimateResult estimate_ape_movers(const std::vector<PanelPair>& pairs, double theta_hat);

}  // namespace fdnet::ape
