#include "fdnet/linmodel.hpp"

#include "fdnet/error.hpp"

#include <cmath>
#include <string>

namespace fdnet::lin {

namespace {

void check_outcome(const Vector& y, const DesignMatrices& dm, const char* where) {
  if (y.size() != dm.n()) {
    fail(ErrorCode::DimensionMismatch, std::string(where) + ": y has length " +
                                           std::to_string(y.size()) + ", design has " +
                                           std::to_string(dm.n()) + " rows");
  }
}

void check_beta(const Vector& beta, const DesignMatrices& dm, const char* where) {
  if (beta.size() != dm.k()) {
    fail(ErrorCode::DimensionMismatch, std::string(where) + ": beta has length " +
                                           std::to_string(beta.size()) + ", design has " +
                                           std::to_string(dm.k()) + " covariates");
  }
}

void check_form(const QuadraticForm& qf, const DesignMatrices& dm, const char* where) {
  if (qf.matrix().rows() != dm.m()) {
    fail(ErrorCode::DimensionMismatch,
         std::string(where) + ": Q must be " + std::to_string(dm.m()) + " x " +
             std::to_string(dm.m()));
  }
}

Vector residual(const Vector& y, const DesignMatrices& dm, const Vector& beta) {
  if (dm.k() == 0) return y;
  return y - dm.x2 * beta;
}

void require_roles(const DesignMatrices& dm, const char* where) {
  if (!dm.has_roles()) {
    fail(ErrorCode::InvalidArgument,
         std::string(where) + ": design has no worker/firm column roles");
  }
}

struct DenseOperators {
  Matrix pinv;
  Matrix m;
  int n2 = 0;
};

DenseOperators dense_operators(const DesignMatrices& dm) {
  const Matrix x1 = dm.dense_x1();
  const linalg::Decomposition svd(x1);
  DenseOperators ops;
  ops.pinv = svd.pinv();
  const linalg::ProjectorPair pair = svd.projectors();
  ops.m = pair.m;
  ops.n2 = pair.n2;
  return ops;
}

}  // namespace

QuadraticForm::QuadraticForm(Matrix q) : q_(std::move(q)) {
  if (q_.rows() != q_.cols()) {
    fail(ErrorCode::InvalidArgument, "QuadraticForm: matrix must be square");
  }
  linalg::require_finite(q_, "QuadraticForm");
  if ((q_ - q_.transpose()).cwiseAbs().maxCoeff() > 1e-12 && q_.size() > 0) {
    fail(ErrorCode::InvalidArgument, "QuadraticForm: matrix must be symmetric");
  }
}

Vector phi_beta(const Vector& y, const DesignMatrices& dm, const Vector& beta) {
  check_outcome(y, dm, "phi_beta");
  check_beta(beta, dm, "phi_beta");
  return dm.projector->annihilate(residual(y, dm, beta));
}

Vector estimate_beta(const Vector& y, const DesignMatrices& dm) {
  check_outcome(y, dm, "estimate_beta");
  if (dm.k() == 0) return Vector::Zero(0);
  const Matrix mx2 = dm.projector->annihilate(dm.x2);
  const Eigen::JacobiSVD<Matrix> svd(mx2);
  const double scale = std::max(1.0, dm.x2.norm());
  if (svd.singularValues().minCoeff() <= 1e-10 * scale) {
    fail(ErrorCode::SingularDesign,
         "estimate_beta: x2' M x2 is singular (covariates absorbed by the effects)");
  }
  return mx2.colPivHouseholderQr().solve(dm.projector->annihilate(y));
}

double estimate_sigma2(const Vector& y, const DesignMatrices& dm, const Vector& beta_hat) {
  check_outcome(y, dm, "estimate_sigma2");
  check_beta(beta_hat, dm, "estimate_sigma2");
  if (dm.n2() == 0) {
    fail(ErrorCode::ZeroDegreesOfFreedom, "estimate_sigma2: Trace(I - x1 x1^+) = 0");
  }
  const Vector mr = dm.projector->annihilate(residual(y, dm, beta_hat));
  return mr.squaredNorm() / dm.n2();
}

double phi_sigma2(const Vector& y, const DesignMatrices& dm, const LinearParams& params) {
  check_outcome(y, dm, "phi_sigma2");
  check_beta(params.beta, dm, "phi_sigma2");
  const Vector r = residual(y, dm, params.beta);
  return r.dot(dm.projector->annihilate(r)) - dm.n2() * params.sigma2;
}

double psi_quadratic(const Vector& y, const DesignMatrices& dm, const LinearParams& params,
                     const QuadraticForm& qf) {
  check_outcome(y, dm, "psi_quadratic");
  check_beta(params.beta, dm, "psi_quadratic");
  check_form(qf, dm, "psi_quadratic");
  if (!dm.projector->full_column_rank()) {
    fail(ErrorCode::RankDeficient, "psi_quadratic: x1 must have full column rank");
  }
  const Vector coef = dm.projector->coefficients(residual(y, dm, params.beta));
  return qf.evaluate(coef) - params.sigma2 * dm.projector->trace_form(qf.matrix());
}

EstimateResult estimate_quadratic_form(const Vector& y, const DesignMatrices& dm,
                                       const QuadraticForm& qf) {
  check_outcome(y, dm, "estimate_quadratic_form");
  check_form(qf, dm, "estimate_quadratic_form");
  if (!dm.projector->full_column_rank()) {
    fail(ErrorCode::RankDeficient, "estimate_quadratic_form: x1 must have full column rank");
  }
  const Vector beta = estimate_beta(y, dm);
  const double sigma2 = estimate_sigma2(y, dm, beta);
  const Vector coef = dm.projector->coefficients(residual(y, dm, beta));
  const double plug_in = qf.evaluate(coef);
  const double trace_term = dm.projector->trace_form(qf.matrix());

  EstimateResult out;
  out.estimate = {plug_in - sigma2 * trace_term};
  out.n = static_cast<std::size_t>(dm.n());
  out.n2 = dm.n2();
  out.diagnostics["plug_in"] = plug_in;
  out.diagnostics["trace_term"] = trace_term;
  out.diagnostics["sigma2_hat"] = sigma2;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    out.components["beta[" + std::to_string(j) + "]"] = beta(j);
  }
  return out;
}

namespace {

// (1/n) [A'B - (A'1)(B'1)'/n] for indicator designs given by column indices.
Matrix demeaned_cross_moment(const DesignMatrices& dm, const std::vector<int>& left,
                             const std::vector<int>& right) {
  const Eigen::Index m = dm.m();
  const double n = static_cast<double>(dm.n());
  Matrix q = Matrix::Zero(m, m);
  Vector left_count = Vector::Zero(m);
  Vector right_count = Vector::Zero(m);
  for (std::size_t e = 0; e < left.size(); ++e) {
    if (left[e] >= 0) left_count(left[e]) += 1.0;
    if (right[e] >= 0) right_count(right[e]) += 1.0;
    if (left[e] >= 0 && right[e] >= 0) q(left[e], right[e]) += 1.0;
  }
  q -= left_count * right_count.transpose() / n;
  return q / n;
}

}  // namespace

QuadraticForm worker_variance_form(const DesignMatrices& dm) {
  require_roles(dm, "worker_variance_form");
  return QuadraticForm(demeaned_cross_moment(dm, dm.edge_worker_col, dm.edge_worker_col));
}

QuadraticForm firm_variance_form(const DesignMatrices& dm) {
  require_roles(dm, "firm_variance_form");
  return QuadraticForm(demeaned_cross_moment(dm, dm.edge_firm_col, dm.edge_firm_col));
}

QuadraticForm worker_firm_covariance_form(const DesignMatrices& dm) {
  require_roles(dm, "worker_firm_covariance_form");
  const Matrix c = demeaned_cross_moment(dm, dm.edge_worker_col, dm.edge_firm_col);
  return QuadraticForm(0.5 * (c + c.transpose()));
}

VarianceDecomposition variance_decomposition(const Vector& y, const DesignMatrices& dm) {
  VarianceDecomposition out;
  out.var_worker = estimate_quadratic_form(y, dm, worker_variance_form(dm));
  out.var_firm = estimate_quadratic_form(y, dm, firm_variance_form(dm));
  out.cov_worker_firm = estimate_quadratic_form(y, dm, worker_firm_covariance_form(dm));
  return out;
}

LinearFunctional phi_beta_functional(const DesignMatrices& dm, const Vector& beta) {
  check_beta(beta, dm, "phi_beta_functional");
  const DenseOperators ops = dense_operators(dm);
  LinearFunctional fn;
  fn.c = ops.m;
  fn.offset = dm.k() == 0 ? Vector::Zero(dm.n()) : Vector(-ops.m * (dm.x2 * beta));
  return fn;
}

namespace {

QuadraticFunctional shifted_quadratic(const Matrix& c, const DesignMatrices& dm,
                                      const Vector& beta, double constant) {
  // (y - x2 b)' C (y - x2 b) + constant
  QuadraticFunctional fn;
  fn.c = c;
  const Vector shift = dm.k() == 0 ? Vector::Zero(dm.n()) : Vector(dm.x2 * beta);
  fn.b = -2.0 * (c * shift);
  fn.d = shift.dot(c * shift) + constant;
  return fn;
}

}  // namespace

QuadraticFunctional phi_sigma2_functional(const DesignMatrices& dm, const LinearParams& params) {
  check_beta(params.beta, dm, "phi_sigma2_functional");
  const DenseOperators ops = dense_operators(dm);
  return shifted_quadratic(ops.m, dm, params.beta, -ops.n2 * params.sigma2);
}

QuadraticFunctional psi_quadratic_functional(const DesignMatrices& dm, const LinearParams& params,
                                             const QuadraticForm& qf) {
  check_beta(params.beta, dm, "psi_quadratic_functional");
  check_form(qf, dm, "psi_quadratic_functional");
  const DenseOperators ops = dense_operators(dm);
  const Matrix c = ops.pinv.transpose() * qf.matrix() * ops.pinv;
  return shifted_quadratic(c, dm, params.beta, -params.sigma2 * c.trace());
}

QuadraticFunctional sigma2_known_beta_functional(const DesignMatrices& dm, const Vector& beta) {
  check_beta(beta, dm, "sigma2_known_beta_functional");
  const DenseOperators ops = dense_operators(dm);
  if (ops.n2 == 0) {
    fail(ErrorCode::ZeroDegreesOfFreedom, "sigma2_known_beta_functional: Trace(M) = 0");
  }
  return shifted_quadratic(ops.m / ops.n2, dm, beta, 0.0);
}

Vector evaluate(const Functional& fn, const Vector& y) {
  if (const auto* lin = std::get_if<LinearFunctional>(&fn)) {
    return lin->c * y + lin->offset;
  }
  const auto& quad = std::get<QuadraticFunctional>(fn);
  Vector out(1);
  out(0) = y.dot(quad.c * y) + quad.b.dot(y) + quad.d;
  return out;
}

Vector gaussian_conditional_expectation(const Functional& fn, const DesignMatrices& dm,
                                        const Vector& a, const LinearParams& params) {
  if (a.size() != dm.m()) {
    fail(ErrorCode::DimensionMismatch, "gaussian_conditional_expectation: a must have length m");
  }
  check_beta(params.beta, dm, "gaussian_conditional_expectation");
  Vector mean = dm.x1 * a;
  if (dm.k() > 0) mean += dm.x2 * params.beta;
  if (const auto* lin = std::get_if<LinearFunctional>(&fn)) {
    if (lin->c.cols() != dm.n()) {
      fail(ErrorCode::DimensionMismatch, "gaussian_conditional_expectation: functional width");
    }
    return lin->c * mean + lin->offset;
  }
  const auto& quad = std::get<QuadraticFunctional>(fn);
  if (quad.c.rows() != dm.n() || quad.c.cols() != dm.n() || quad.b.size() != dm.n()) {
    fail(ErrorCode::DimensionMismatch, "gaussian_conditional_expectation: functional width");
  }
  Vector out(1);
  out(0) = mean.dot(quad.c * mean) + params.sigma2 * quad.c.trace() + quad.b.dot(mean) + quad.d;
  return out;
}

}  // namespace fdnet::lin
