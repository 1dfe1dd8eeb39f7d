#include "fdnet/avgeff.hpp"

#include "fdnet/error.hpp"

#include <cmath>

namespace fdnet::ape {

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::MoversAPE: return "MoversAPE";
    case TargetKind::StayersAPE: return "StayersAPE";
    case TargetKind::ConfigC_APE: return "ConfigC_APE";
  }
  return "?";
}

TargetKind target_kind_from_string(const std::string& name) {
  if (name == "movers" || name == "MoversAPE") return TargetKind::MoversAPE;
  if (name == "stayers" || name == "StayersAPE") return TargetKind::StayersAPE;
  if (name == "configc" || name == "C" || name == "ConfigC_APE") return TargetKind::ConfigC_APE;
  fail(ErrorCode::InvalidArgument, "unknown target '" + name + "' (movers, stayers, configc)");
}

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double m_ape(double a, double theta) { return logistic(theta + a) - logistic(a); }

double target_value(const TargetEffect& target, const Vector& a) {
  if (target.kind == TargetKind::ConfigC_APE) {
    if (a.size() != 4) fail(ErrorCode::DimensionMismatch, "ConfigC target needs 4 effects");
    return m_ape(a(0) + a(2), target.theta);
  }
  if (a.size() != 1) fail(ErrorCode::DimensionMismatch, "panel target needs 1 effect");
  return m_ape(a(0), target.theta);
}

double psi_movers_simple(int y1, int y2, int x1, int x2) {
  return static_cast<double>((x2 - x1) * (y2 - y1));
}

double psi_movers_exp(int y1, int y2, int x1, int x2, double theta) {
  if (x1 == x2) return 0.0;
  return y1 * (1 - y2) * std::exp(theta * (1 - x1)) - (1 - y1) * y2 * std::exp(-theta * x2);
}

DesignMatrices target_design(TargetKind kind) {
  switch (kind) {
    case TargetKind::MoversAPE: return logit::panel_design(Matrix{{0.0}, {1.0}});
    case TargetKind::StayersAPE: return logit::panel_design(Matrix{{1.0}, {1.0}});
    case TargetKind::ConfigC_APE:
      return logit::config_c_design(Matrix{{0.0}, {1.0}, {0.0}, {1.0}});
  }
  fail(ErrorCode::UnknownCase, "target_design: unknown target");
}

double verify_psi(const std::function<double(OutcomeCode)>& psi, const TargetEffect& target,
                  const DesignMatrices& dm, const std::vector<Vector>& a_grid, int cap) {
  const Vector theta = Vector::Constant(dm.k(), target.theta);
  double worst = 0.0;
  for (const Vector& a : a_grid) {
    const double mean = logit::brute_force_expectation(psi, dm, a, theta, cap);
    worst = std::max(worst, std::abs(mean - target_value(target, a)));
  }
  return worst;
}

std::vector<double> GridSpec::axis(int n) const {
  if (n < 1) fail(ErrorCode::InvalidArgument, "grid needs at least one point");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = n == 1 ? 0.5 * (lower + upper) : lower + (upper - lower) * i / (n - 1);
  }
  return out;
}

std::vector<Vector> make_grid(TargetKind kind, const GridSpec& spec) {
  std::vector<Vector> grid;
  if (kind != TargetKind::ConfigC_APE) {
    for (double a : spec.axis(spec.points)) grid.push_back(Vector::Constant(1, a));
    return grid;
  }
  const auto main_axis = spec.axis(spec.points);
  const auto nuisance = spec.axis(spec.nuisance_points);
  for (double a1 : main_axis) {
    for (double a3 : main_axis) {
      for (double a2 : nuisance) {
        for (double a4 : nuisance) grid.push_back(Vector{{a1, a2, a3, a4}});
      }
    }
  }
  return grid;
}

CertificationReport certify_impossibility(const TargetEffect& target, const DesignMatrices& dm,
                                          const std::vector<Vector>& a_grid, double tol, int cap) {
  if (target.theta == 0.0) {
    fail(ErrorCode::InvalidArgument,
         "certify_impossibility: theta = 0 makes the effect zero, which psi = 0 solves");
  }
  const int n = static_cast<int>(dm.n());
  if (n > cap || n > 62) fail(ErrorCode::CapExceeded, "certify_impossibility: design too large");
  const Eigen::Index outcomes = Eigen::Index{1} << n;
  const Vector theta = Vector::Constant(dm.k(), target.theta);

  Matrix a_mat(static_cast<Eigen::Index>(a_grid.size()), outcomes);
  Vector b(a_mat.rows());
  for (std::size_t g = 0; g < a_grid.size(); ++g) {
    const auto row = static_cast<Eigen::Index>(g);
    for (Eigen::Index y = 0; y < outcomes; ++y) {
      a_mat(row, y) =
          logit::outcome_probability(static_cast<OutcomeCode>(y), dm, a_grid[g], theta);
    }
    b(row) = target_value(target, a_grid[g]);
  }

  CertificationReport report;
  report.target = target;
  report.equations = static_cast<int>(a_mat.rows());
  report.unknowns = static_cast<int>(outcomes);
  report.tol = tol;
  report.psi = a_mat.completeOrthogonalDecomposition().solve(b);
  report.residual = (a_mat * report.psi - b).norm();
  report.verdict = report.residual > tol ? "no-solution" : "solution-exists";
  return report;
}

CertificationReport certify_impossibility(const TargetEffect& target, const GridSpec& grid,
                                          double tol) {
  CertificationReport report = certify_impossibility(target, target_design(target.kind),
                                                     make_grid(target.kind, grid), tol);
  report.grid = grid;
  return report;
}

EstimateResult estimate_ape_movers(const std::vector<PanelPair>& pairs, double theta_hat) {
  double sum_exp = 0.0, sum_exp2 = 0.0, sum_simple = 0.0, sum_simple2 = 0.0;
  std::size_t movers = 0;
  for (const auto& p : pairs) {
    if (p.x[0] == p.x[1]) continue;
    ++movers;
    const double e = psi_movers_exp(p.y[0], p.y[1], p.x[0], p.x[1], theta_hat);
    const double s = psi_movers_simple(p.y[0], p.y[1], p.x[0], p.x[1]);
    sum_exp += e;
    sum_exp2 += e * e;
    sum_simple += s;
    sum_simple2 += s * s;
  }
  if (movers == 0) fail(ErrorCode::NoMoverBlocks, "estimate_ape_movers: no pair with x1 != x2");
  const double count = static_cast<double>(movers);
  const auto se = [count](double s, double s2) {
    if (count < 2) return 0.0;
    const double mean = s / count;
    const double var = std::max(0.0, (s2 - count * mean * mean) / (count - 1));
    return std::sqrt(var / count);
  };

  EstimateResult out;
  out.estimate = {sum_exp / count};
  out.n = movers;
  out.components["psi_exp"] = sum_exp / count;
  out.components["psi_simple"] = sum_simple / count;
  out.diagnostics["mc_se"] = se(sum_exp, sum_exp2);
  out.diagnostics["mc_se_simple"] = se(sum_simple, sum_simple2);
  out.diagnostics["theta_hat"] = theta_hat;
  out.diagnostics["n_pairs"] = static_cast<double>(pairs.size());
  return out;
}

}  // namespace fdnet::ape
