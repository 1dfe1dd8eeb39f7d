#include "fdnet/linalg.hpp"

#include "fdnet/error.hpp"

#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <string>

namespace fdnet::linalg {

namespace {

// Above this many entries a sparse matrix is not densified for rank().
constexpr double kDenseRankEntries = 250000.0;

}  // namespace

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    fail(ErrorCode::NonFinite, std::string(what) + ": matrix has non-finite entries");
  }
}

double trace(const Matrix& a) { return a.trace(); }

Decomposition::Decomposition(const Matrix& a, double tol)
    : rows_(a.rows()), cols_(a.cols()) {
  require_finite(a, "svd");
  if (a.size() == 0) {
    u_ = Matrix::Zero(rows_, 0);
    v_ = Matrix::Identity(cols_, cols_);
    s_ = Vector::Zero(0);
    return;
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeFullV);
  u_ = svd.matrixU();
  s_ = svd.singularValues();
  v_ = svd.matrixV();
  const double smax = s_.size() > 0 ? s_(0) : 0.0;
  cutoff_ = tol * smax;
  rank_ = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < s_.size(); ++i) {
      if (s_(i) > cutoff_) ++rank_;
    }
  }
}

Matrix Decomposition::pinv() const {
  Matrix out = Matrix::Zero(cols_, rows_);
  for (int i = 0; i < rank_; ++i) {
    out.noalias() += (v_.col(i) / s_(i)) * u_.col(i).transpose();
  }
  return out;
}

ProjectorPair Decomposition::projectors() const {
  ProjectorPair pair;
  const auto u1 = u_.leftCols(rank_);
  pair.p = u1 * u1.transpose();
  // Symmetrize away round-off so p and m are exactly symmetric.
  pair.p = 0.5 * (pair.p + pair.p.transpose()).eval();
  pair.m = Matrix::Identity(rows_, rows_) - pair.p;
  const double tr = pair.m.trace();
  const double rounded = std::round(tr);
  if (std::abs(tr - rounded) >= 1e-8) {
    fail(ErrorCode::TraceNotInteger,
         "projectors: Trace(I - x1 x1^+) = " + std::to_string(tr) + " is not an integer");
  }
  pair.n2 = static_cast<int>(rounded);
  return pair;
}

Matrix Decomposition::null_space() const {
  return v_.rightCols(cols_ - rank_);
}

Matrix pinv(const Matrix& a, double tol) { return Decomposition(a, tol).pinv(); }

int rank(const Matrix& a, double tol) { return Decomposition(a, tol).rank(); }

int rank(const SparseMatrix& a, double tol) {
  if (a.rows() == 0 || a.cols() == 0) return 0;
  if (static_cast<double>(a.rows()) * static_cast<double>(a.cols()) <= kDenseRankEntries) {
    return rank(Matrix(a), tol);
  }
  SparseMatrix compressed = a;
  compressed.makeCompressed();
  Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
  // Absolute pivot threshold scaled like the dense relative cutoff; for the
  // 0/1 incidence matrices this path serves, column norms are O(1).
  double max_norm = 0.0;
  for (int k = 0; k < compressed.outerSize(); ++k) {
    max_norm = std::max(max_norm, compressed.col(k).norm());
  }
  qr.setPivotThreshold(std::max(tol, 1e-10) * std::max(max_norm, 1.0));
  qr.compute(compressed);
  if (qr.info() != Eigen::Success) {
    fail(ErrorCode::NonFinite, "rank: sparse QR failed");
  }
  return static_cast<int>(qr.rank());
}

ProjectorPair projectors(const Matrix& x1, double tol) {
  return Decomposition(x1, tol).projectors();
}

Matrix null_space(const Matrix& a, double tol) { return Decomposition(a, tol).null_space(); }

Matrix reduced_row_echelon(const Matrix& basis, double tol) {
  Matrix r = basis;
  const Eigen::Index rows = r.rows();
  const Eigen::Index cols = r.cols();
  Eigen::Index lead = 0;
  for (Eigen::Index c = 0; c < cols && lead < rows; ++c) {
    Eigen::Index pivot = lead;
    for (Eigen::Index i = lead + 1; i < rows; ++i) {
      if (std::abs(r(i, c)) > std::abs(r(pivot, c))) pivot = i;
    }
    if (std::abs(r(pivot, c)) <= tol) {
      r.block(lead, c, rows - lead, 1).setZero();
      continue;
    }
    r.row(lead).swap(r.row(pivot));
    r.row(lead) /= r(lead, c);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i != lead) r.row(i) -= r(i, c) * r.row(lead);
    }
    ++lead;
  }
  return r.topRows(lead);
}

ColumnSpaceProjector::ColumnSpaceProjector(SparseMatrix x1, double tol)
    : x1_(std::move(x1)), tol_(tol) {
  x1_.makeCompressed();
  for (Eigen::Index k = 0; k < x1_.nonZeros(); ++k) {
    if (!std::isfinite(x1_.valuePtr()[k])) {
      fail(ErrorCode::NonFinite, "design: x1 has non-finite entries");
    }
  }
  if (x1_.cols() == 0) {
    rank_ = 0;
    return;
  }
  // Fast path: all LDLT pivots of x1'x1 well away from zero means full
  // column rank; otherwise fall back to a rank-revealing QR.
  SparseMatrix gram = SparseMatrix(x1_.transpose()) * x1_;
  auto ldlt = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(gram);
  bool clean = ldlt->info() == Eigen::Success;
  if (clean) {
    const Vector d = ldlt->vectorD();
    const double top = d.cwiseAbs().maxCoeff();
    clean = top > 0.0 && d.minCoeff() > 1e-8 * top;
  }
  rank_ = clean ? static_cast<int>(x1_.cols()) : linalg::rank(x1_, tol_);
  if (full_column_rank()) {
    if (ldlt->info() != Eigen::Success) {
      fail(ErrorCode::RankDeficient, "design: x1'x1 factorization failed");
    }
    gram_ = std::move(ldlt);
  }
}

const Matrix& ColumnSpaceProjector::deficient_pinv() const {
  std::call_once(pinv_once_, [this] { pinv_ = Decomposition(Matrix(x1_), tol_).pinv(); });
  return pinv_;
}

Vector ColumnSpaceProjector::coefficients(const Vector& v) const {
  if (v.size() != x1_.rows()) {
    fail(ErrorCode::DimensionMismatch, "coefficients: vector length does not match x1 rows");
  }
  if (x1_.cols() == 0) return Vector::Zero(0);
  if (gram_) return gram_->solve(Vector(x1_.transpose() * v));
  return deficient_pinv() * v;
}

Matrix ColumnSpaceProjector::coefficients(const Matrix& v) const {
  if (v.rows() != x1_.rows()) {
    fail(ErrorCode::DimensionMismatch, "coefficients: matrix rows do not match x1 rows");
  }
  if (x1_.cols() == 0) return Matrix::Zero(0, v.cols());
  if (gram_) return gram_->solve(Matrix(x1_.transpose() * v));
  return deficient_pinv() * v;
}

Vector ColumnSpaceProjector::annihilate(const Vector& v) const {
  if (x1_.cols() == 0) return v;
  return v - x1_ * coefficients(v);
}

Matrix ColumnSpaceProjector::annihilate(const Matrix& v) const {
  if (x1_.cols() == 0) return v;
  return v - x1_ * coefficients(v);
}

double ColumnSpaceProjector::trace_form(const Matrix& q) const {
  if (q.rows() != x1_.cols() || q.cols() != x1_.cols()) {
    fail(ErrorCode::DimensionMismatch, "trace_form: Q must be m x m");
  }
  if (x1_.cols() == 0) return 0.0;
  if (!gram_) {
    const Matrix& p = deficient_pinv();
    return (p.transpose() * q * p).trace();
  }
  // Trace(Q G^-1) = sum_j Q.row(j) . G^-1 e_j over rows j where Q is nonzero.
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    if (!q.row(j).isZero(0.0)) support.push_back(j);
  }
  constexpr Eigen::Index kChunk = 256;
  double total = 0.0;
  const Eigen::Index m = x1_.cols();
  for (std::size_t start = 0; start < support.size(); start += kChunk) {
    const Eigen::Index width =
        std::min<Eigen::Index>(kChunk, static_cast<Eigen::Index>(support.size() - start));
    Matrix rhs = Matrix::Zero(m, width);
    for (Eigen::Index c = 0; c < width; ++c) rhs(support[start + c], c) = 1.0;
    const Matrix cols = gram_->solve(rhs);
    for (Eigen::Index c = 0; c < width; ++c) {
      total += q.row(support[start + c]).dot(cols.col(c));
    }
  }
  return total;
}

Matrix ColumnSpaceProjector::dense_pinv() const {
  if (!gram_) return deficient_pinv();
  return gram_->solve(Matrix(x1_.transpose()));
}

ProjectorPair ColumnSpaceProjector::dense_projectors() const {
  return projectors(Matrix(x1_), tol_);
}

}  // namespace fdnet::linalg
