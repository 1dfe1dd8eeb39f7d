#pragma once

// Gaussian linear network model y = x1 a + x2 beta + eps, eps ~ N(0, s2 I):
// heterogeneity-free moment functions, the quasi-differencing and
// degree-of-freedom-corrected estimators, trace-corrected quadratic forms of
// the effects, and an exact conditional-expectation oracle.

#include "fdnet/netcore.hpp"
#include "fdnet/result.hpp"

#include <variant>

namespace fdnet::lin {

using linalg::Matrix;
using linalg::Vector;

struct LinearParams {
  Vector beta;
  double sigma2 = 1.0;
};

/// Symmetric m x m matrix defining mu = a' Q a.
class QuadraticForm {
 public:
  QuadraticForm() = default;
  /// Throws InvalidArgument unless q is square and symmetric within 1e-12.
  explicit QuadraticForm(Matrix q);

  const Matrix& matrix() const { return q_; }
  double evaluate(const Vector& a) const { return a.dot(q_ * a); }

 private:
  Matrix q_;
};

/// (I - x1 x1^+)(y - x2 beta)
Vector phi_beta(const Vector& y, const DesignMatrices& dm, const Vector& beta);

/// [x2' M x2]^-1 x2' M y. Throws SingularDesign when x2 is (numerically)
/// absorbed by the column span of x1.
Vector estimate_beta(const Vector& y, const DesignMatrices& dm);

/// r' M r / Trace(M) with r = y - x2 beta_hat. Throws ZeroDegreesOfFreedom
/// when Trace(M) = 0.
double estimate_sigma2(const Vector& y, const DesignMatrices& dm, const Vector& beta_hat);

/// r' M r - n2 sigma2
double phi_sigma2(const Vector& y, const DesignMatrices& dm, const LinearParams& params);

/// r' (x1^+)' Q x1^+ r - sigma2 Trace((x1^+)' Q x1^+). Needs full column rank.
double psi_quadratic(const Vector& y, const DesignMatrices& dm, const LinearParams& params,
                     const QuadraticForm& qf);

/// Plug-in beta_hat and sigma2_hat into psi_quadratic. Diagnostics carry the
/// uncorrected plug-in value and the trace term.
EstimateResult estimate_quadratic_form(const Vector& y, const DesignMatrices& dm,
                                       const QuadraticForm& qf);

// Edge-weighted second moments of the effects over the rows of a design with
// worker/firm column roles: each edge counts once, moments are de-meaned.
QuadraticForm worker_variance_form(const DesignMatrices& dm);
QuadraticForm firm_variance_form(const DesignMatrices& dm);
QuadraticForm worker_firm_covariance_form(const DesignMatrices& dm);

struct VarianceDecomposition {
  EstimateResult var_worker;
  EstimateResult var_firm;
  EstimateResult cov_worker_firm;
};

VarianceDecomposition variance_decomposition(const Vector& y, const DesignMatrices& dm);

/// Vector-valued linear functional y -> c y + offset.
struct LinearFunctional {
  Matrix c;
  Vector offset;
};

/// Scalar quadratic functional y -> y' c y + b' y + d.
struct QuadraticFunctional {
  Matrix c;
  Vector b;
  double d = 0.0;
};

using Functional = std::variant<LinearFunctional, QuadraticFunctional>;

// The moment functions above written as explicit functionals, built from a
// dense SVD pseudo-inverse independent of the estimator's factorization.
LinearFunctional phi_beta_functional(const DesignMatrices& dm, const Vector& beta);
QuadraticFunctional phi_sigma2_functional(const DesignMatrices& dm, const LinearParams& params);
QuadraticFunctional psi_quadratic_functional(const DesignMatrices& dm, const LinearParams& params,
                                             const QuadraticForm& qf);
/// sigma2_hat with beta known: r' M r / n2.
QuadraticFunctional sigma2_known_beta_functional(const DesignMatrices& dm, const Vector& beta);

Vector evaluate(const Functional& fn, const Vector& y);

/// Exact E[fn(Y)] for Y = x1 a + x2 beta + eps, eps ~ N(0, sigma2 I).
/// Linear functionals return a vector; quadratic ones a length-1 vector.
Vector gaussian_conditional_expectation(const Functional& fn, const DesignMatrices& dm,
                                        const Vector& a, const LinearParams& params);

}  // namespace fdnet::lin
