#pragma once

// Dense and sparse linear algebra shared by the linear and logit models:
// SVD-based pseudo-inverse, rank, orthogonal projectors and null spaces.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <mutex>
#include <vector>

namespace fdnet::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kDefaultTol = 1e-12;

/// The two orthogonal projectors attached to a design x1:
/// p = x1 x1^+ (onto its column space), m = I - p, and n2 = Trace(m).
struct ProjectorPair {
  Matrix p;
  Matrix m;
  int n2 = 0;
};

/// Thin SVD computed once and reused for pinv, rank and projectors, so the
/// three always agree on which singular values count as zero.
class Decomposition {
 public:
  explicit Decomposition(const Matrix& a, double tol = kDefaultTol);

  int rank() const { return rank_; }
  const Vector& singular_values() const { return s_; }
  double cutoff() const { return cutoff_; }

  Matrix pinv() const;
  ProjectorPair projectors() const;
  /// Orthonormal basis (columns) of the null space of a.
  Matrix null_space() const;

 private:
  Matrix u_;
  Vector s_;
  Matrix v_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  double cutoff_ = 0.0;
  int rank_ = 0;
};

/// Moore-Penrose pseudo-inverse; singular values below tol * sigma_max are
/// treated as zero. Throws NonFinite on NaN/inf input.
Matrix pinv(const Matrix& a, double tol = kDefaultTol);

int rank(const Matrix& a, double tol = kDefaultTol);

/// Rank of a sparse matrix. Small inputs go through the dense SVD; large ones
/// through a column-pivoted sparse QR.
int rank(const SparseMatrix& a, double tol = kDefaultTol);

/// Throws TraceNotInteger when Trace(m) is not within 1e-8 of an integer.
ProjectorPair projectors(const Matrix& x1, double tol = kDefaultTol);

Matrix null_space(const Matrix& a, double tol = kDefaultTol);

/// Reduced row echelon form of the rows of `basis` (each row one vector).
/// Gives the canonical basis of a row space: each vector has a leading +1 and
/// zeros in the other vectors' pivot positions.
Matrix reduced_row_echelon(const Matrix& basis, double tol = 1e-10);

double trace(const Matrix& a);

void require_finite(const Matrix& a, const char* what);

/// Least-squares machinery for a fixed design x1, shared across outcome
/// vectors. Full-column-rank designs use a sparse LDLT of x1'x1, which keeps
/// mobility networks with thousands of nodes cheap; rank-deficient designs
/// fall back to the dense pseudo-inverse.
class ColumnSpaceProjector {
 public:
  explicit ColumnSpaceProjector(SparseMatrix x1, double tol = kDefaultTol);

  Eigen::Index rows() const { return x1_.rows(); }
  Eigen::Index cols() const { return x1_.cols(); }
  int rank() const { return rank_; }
  bool full_column_rank() const { return rank_ == x1_.cols(); }
  /// n - rank(x1), the dimension of the annihilated subspace.
  int n2() const { return static_cast<int>(x1_.rows()) - rank_; }
  const SparseMatrix& x1() const { return x1_; }

  /// x1^+ v
  Vector coefficients(const Vector& v) const;
  Matrix coefficients(const Matrix& v) const;
  /// (I - x1 x1^+) v
  Vector annihilate(const Vector& v) const;
  Matrix annihilate(const Matrix& v) const;
  /// Trace((x1^+)' q x1^+) = Trace(q x1^+ (x1^+)').
  double trace_form(const Matrix& q) const;
  /// Dense x1^+, for oracles and small designs.
  Matrix dense_pinv() const;
  ProjectorPair dense_projectors() const;

 private:
  SparseMatrix x1_;
  double tol_;
  int rank_ = 0;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> gram_;
  // Dense pseudo-inverse for rank-deficient designs, built on first use.
  const Matrix& deficient_pinv() const;
  mutable std::once_flag pinv_once_;
  mutable Matrix pinv_;
};

}  // namespace fdnet::linalg
