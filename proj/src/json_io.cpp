#include "fdnet/json_io.hpp"

namespace fdnet::json {

Json to_json(const linalg::Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const EstimateResult& r) {
  Json out;
  out["estimate"] = r.estimate;
  if (!r.components.empty()) out["components"] = r.components;
  out["n"] = r.n;
  out["n2"] = r.n2 ? Json(*r.n2) : Json(nullptr);
  out["diagnostics"] = r.diagnostics;
  if (r.seed) out["seed"] = *r.seed;
  if (!r.config.empty()) out["config"] = r.config;
  return out;
}

Json to_json(const lin::VarianceDecomposition& v) {
  Json out;
  out["var_worker"] = to_json(v.var_worker);
  out["var_firm"] = to_json(v.var_firm);
  out["cov_worker_firm"] = to_json(v.cov_worker_firm);
  return out;
}

Json to_json(const logit::MomentFunction& phi) {
  Json out;
  out["level_key"] = phi.level_key;
  Json support = Json::array();
  for (auto y : phi.support) support.push_back(logit::to_bitstring(y, phi.n));
  out["support"] = support;
  out["coeffs"] = phi.coeffs;
  out["theta_at"] = to_json(phi.theta_at);
  out["closed_form"] = phi.closed_form ? Json(logit::to_string(*phi.closed_form)) : Json(nullptr);
  out["informative"] = phi.informative;
  return out;
}

Json to_json(const std::vector<SubnetworkPattern>& patterns) {
  Json out = Json::array();
  for (const auto& p : patterns) {
    Json item;
    item["kind"] = to_string(p.kind);
    item["edges"] = p.member_edges;
    out.push_back(item);
  }
  return out;
}

Json to_json(const ape::CertificationReport& report) {
  Json out;
  out["target"] = ape::to_string(report.target.kind);
  out["theta"] = report.target.theta;
  Json grid;
  grid["lower"] = report.grid.lower;
  grid["upper"] = report.grid.upper;
  grid["points"] = report.grid.points;
  if (report.target.kind == ape::TargetKind::ConfigC_APE) {
    grid["nuisance_points"] = report.grid.nuisance_points;
  }
  grid["equations"] = report.equations;
  grid["unknowns"] = report.unknowns;
  out["grid"] = grid;
  out["residual"] = report.residual;
  out["tol"] = report.tol;
  out["verdict"] = report.verdict;
  return out;
}

Json to_json(const sim::McSummary& s) {
  Json out;
  out["estimator"] = s.estimator;
  out["n_reps"] = s.n_reps;
  out["n_ok"] = s.n_ok;
  out["n_failed"] = s.n_failed;
  out["mean"] = s.mean;
  out["mean_truth"] = s.mean_truth;
  out["bias"] = s.bias;
  out["sd"] = s.sd;
  out["mc_se"] = s.mc_se;
  out["failures"] = s.failures;
  out["seed"] = s.seed;
  return out;
}

}  // namespace fdnet::json
