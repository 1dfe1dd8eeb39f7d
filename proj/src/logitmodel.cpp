#include "fdnet/logitmodel.hpp"

#include "fdnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace fdnet::logit {

namespace {

double softplus(double eta) { return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))); }

void check_cap(int n, int cap, const char* where) {
  if (n > cap || n > 62) {
    fail(ErrorCode::CapExceeded, std::string(where) + ": " + std::to_string(n) +
                                     " outcomes exceed the enumeration cap of " +
                                     std::to_string(cap));
  }
}

void check_theta(const Vector& theta, const DesignMatrices& dm, const char* where) {
  if (theta.size() != dm.k()) {
    fail(ErrorCode::DimensionMismatch, std::string(where) + ": theta has length " +
                                           std::to_string(theta.size()) + ", design has " +
                                           std::to_string(dm.k()) + " covariates");
  }
}

void check_block(const Matrix& x, const Vector& theta, Eigen::Index rows, const char* where) {
  if (x.rows() != rows || x.cols() != theta.size()) {
    fail(ErrorCode::DimensionMismatch, std::string(where) + ": x must be " +
                                           std::to_string(rows) + " x dim(theta)");
  }
}

Vector linear_index(const DesignMatrices& dm, const Vector& a, const Vector& theta) {
  if (a.size() != dm.m()) fail(ErrorCode::DimensionMismatch, "logit: a must have length m");
  check_theta(theta, dm, "logit");
  Vector eta = dm.x1 * a;
  if (dm.k() > 0) eta += dm.x2 * theta;
  return eta;
}

// y'x2 for a packed outcome.
Vector outcome_covariate_sum(OutcomeCode y, const Matrix& x2) {
  const int n = static_cast<int>(x2.rows());
  Vector sum = Vector::Zero(x2.cols());
  for (int i = 0; i < n; ++i) {
    if (outcome_bit(y, i, n)) sum += x2.row(i).transpose();
  }
  return sum;
}

template <std::size_t N>
OutcomeCode encode_array(const std::array<int, N>& y) {
  OutcomeCode code = 0;
  for (int v : y) {
    if (v != 0 && v != 1) fail(ErrorCode::InvalidArgument, "outcome entries must be 0 or 1");
    code = (code << 1) | static_cast<OutcomeCode>(v);
  }
  return code;
}

// Echelon-normalized null direction `component` of the weight row over
// `members` (ascending): e_c - (w_c / w_last) e_last.
double echelon_coefficient(OutcomeCode y, const std::vector<OutcomeCode>& members,
                           const Matrix& x, const Vector& theta, int component) {
  const int last = static_cast<int>(members.size()) - 1;
  if (component < 0 || component >= last) {
    fail(ErrorCode::UnknownCase, "tetrad: component " + std::to_string(component) +
                                     " out of range for a level with " +
                                     std::to_string(members.size()) + " members");
  }
  const auto log_weight = [&](OutcomeCode m) {
    return outcome_covariate_sum(m, x).dot(theta);
  };
  if (y == members[component]) return 1.0;
  if (y == members[last]) {
    return -std::exp(log_weight(members[component]) - log_weight(members[last]));
  }
  return 0.0;
}

int dyad_index(int p, int q) {
  if (p > q) std::swap(p, q);
  static constexpr int table[4][4] = {{-1, 0, 1, 2}, {0, -1, 3, 4}, {1, 3, -1, 5}, {2, 4, 5, -1}};
  return table[p][q];
}

OutcomeCode dyads_to_code(std::initializer_list<std::pair<int, int>> dyads) {
  std::array<int, 6> y{};
  for (auto [p, q] : dyads) y[dyad_index(p, q)] = 1;
  return encode_array(y);
}

MomentFunction make_two_point(int n, OutcomeCode lo, double c_lo, OutcomeCode hi, double c_hi,
                              const Vector& theta, ClosedForm form) {
  MomentFunction phi;
  phi.n = n;
  if (lo > hi) {
    std::swap(lo, hi);
    std::swap(c_lo, c_hi);
  }
  phi.support = {lo, hi};
  phi.coeffs = {c_lo, c_hi};
  phi.theta_at = theta;
  phi.closed_form = form;
  return phi;
}

DesignMatrices block_design(const std::vector<std::vector<int>>& rows, int columns,
                            const Matrix& x, const Vector& y) {
  Matrix x1 = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), columns);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c : rows[r]) x1(static_cast<Eigen::Index>(r), c) = 1.0;
  }
  Vector outcome = y.size() == 0 ? Vector::Zero(x1.rows()) : y;
  return DesignMatrices::from_dense(std::move(outcome), x1, x);
}

}  // namespace

OutcomeCode encode_outcome(const std::vector<int>& y) {
  if (y.size() > 62) fail(ErrorCode::CapExceeded, "outcome vector too long to pack");
  OutcomeCode code = 0;
  for (int v : y) {
    if (v != 0 && v != 1) fail(ErrorCode::InvalidArgument, "outcome entries must be 0 or 1");
    code = (code << 1) | static_cast<OutcomeCode>(v);
  }
  return code;
}

OutcomeCode encode_outcome(const Vector& y) {
  std::vector<int> bits(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      fail(ErrorCode::InvalidArgument, "outcome entries must be 0 or 1");
    }
    bits[i] = y(i) == 1.0 ? 1 : 0;
  }
  return encode_outcome(bits);
}

std::vector<int> decode_outcome(OutcomeCode y, int n) {
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = outcome_bit(y, i, n);
  return out;
}

std::string to_bitstring(OutcomeCode y, int n) {
  std::string s(n, '0');
  for (int i = 0; i < n; ++i) s[i] = outcome_bit(y, i, n) ? '1' : '0';
  return s;
}

double loglik(const Vector& y, const DesignMatrices& dm, const Vector& a, const Vector& theta) {
  if (y.size() != dm.n()) fail(ErrorCode::DimensionMismatch, "loglik: y length mismatch");
  const Vector eta = linear_index(dm, a, theta);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) fail(ErrorCode::InvalidArgument, "loglik: y must be binary");
    total += y(i) * eta(i) - softplus(eta(i));
  }
  return total;
}

double loglik(OutcomeCode y, const DesignMatrices& dm, const Vector& a, const Vector& theta) {
  const Vector eta = linear_index(dm, a, theta);
  const int n = static_cast<int>(dm.n());
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += outcome_bit(y, i, n) * eta(i) - softplus(eta(i));
  return total;
}

std::size_t LevelSetIndex::total_outcomes() const {
  std::size_t total = 0;
  for (const auto& [key, members] : levels) total += members.size();
  return total;
}

LevelSetIndex sufficient_levels(const Eigen::MatrixXi& x1, int cap) {
  const int n = static_cast<int>(x1.rows());
  check_cap(n, cap, "sufficient_levels");
  LevelSetIndex index;
  index.n = n;
  const OutcomeCode total = OutcomeCode{1} << n;
  LevelKey key(x1.cols());
  for (OutcomeCode y = 0; y < total; ++y) {
    std::fill(key.begin(), key.end(), 0L);
    for (int i = 0; i < n; ++i) {
      if (!outcome_bit(y, i, n)) continue;
      for (Eigen::Index c = 0; c < x1.cols(); ++c) key[c] += x1(i, c);
    }
    index.levels[key].push_back(y);
  }
  return index;
}

LevelSetIndex sufficient_levels(const DesignMatrices& dm, int cap) {
  check_cap(static_cast<int>(dm.n()), cap, "sufficient_levels");
  const Matrix dense = dm.dense_x1();
  Eigen::MatrixXi x1(dense.rows(), dense.cols());
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    for (Eigen::Index j = 0; j < dense.cols(); ++j) {
      const double v = dense(i, j);
      if (std::abs(v - std::round(v)) > 1e-12) {
        fail(ErrorCode::InvalidArgument, "sufficient_levels: x1 must be integer-valued");
      }
      x1(i, j) = static_cast<int>(std::lround(v));
    }
  }
  return sufficient_levels(x1, cap);
}

std::string to_string(ClosedForm form) {
  switch (form) {
    case ClosedForm::CondLogit: return "CondLogit";
    case ClosedForm::Tetrad: return "Tetrad";
    case ClosedForm::ConfigC: return "ConfigC";
    case ClosedForm::ConfigF: return "ConfigF";
  }
  return "?";
}

double MomentFunction::operator()(OutcomeCode y) const {
  auto it = std::lower_bound(support.begin(), support.end(), y);
  if (it == support.end() || *it != y) return 0.0;
  return coeffs[static_cast<std::size_t>(it - support.begin())];
}

Vector MomentFunction::dense() const {
  Vector out = Vector::Zero(Eigen::Index{1} << n);
  for (std::size_t s = 0; s < support.size(); ++s) {
    out(static_cast<Eigen::Index>(support[s])) = coeffs[s];
  }
  return out;
}

double level_residual(const MomentFunction& phi, const DesignMatrices& dm, const Vector& theta) {
  check_theta(theta, dm, "level_residual");
  double total = 0.0;
  for (std::size_t s = 0; s < phi.support.size(); ++s) {
    total += phi.coeffs[s] * std::exp(outcome_covariate_sum(phi.support[s], dm.x2).dot(theta));
  }
  return total;
}

namespace {

bool covariate_sums_vary(const std::vector<OutcomeCode>& members, const Matrix& x2) {
  const Vector first = outcome_covariate_sum(members.front(), x2);
  for (std::size_t j = 1; j < members.size(); ++j) {
    const Vector other = outcome_covariate_sum(members[j], x2);
    if ((other - first).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + first.cwiseAbs().maxCoeff())) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<MomentFunction> discover_moments(const DesignMatrices& dm, const Vector& theta,
                                             int cap) {
  check_theta(theta, dm, "discover_moments");
  const LevelSetIndex index = sufficient_levels(dm, cap);
  const int n = static_cast<int>(dm.n());
  std::vector<MomentFunction> out;
  for (const auto& [key, members] : index.levels) {
    if (members.size() < 2) continue;
    const Eigen::Index size = static_cast<Eigen::Index>(members.size());
    Vector log_w(size);
    for (Eigen::Index j = 0; j < size; ++j) {
      log_w(j) = dm.k() == 0 ? 0.0 : outcome_covariate_sum(members[j], dm.x2).dot(theta);
    }
    // Rescaling the row by exp(-max) leaves its null space unchanged.
    const Matrix row = (log_w.array() - log_w.maxCoeff()).exp().matrix().transpose();
    const Matrix basis = linalg::null_space(row);
    const Matrix canonical = linalg::reduced_row_echelon(basis.transpose());
    const bool informative = dm.k() > 0 && covariate_sums_vary(members, dm.x2);
    for (Eigen::Index r = 0; r < canonical.rows(); ++r) {
      MomentFunction phi;
      phi.n = n;
      phi.level_key = key;
      phi.theta_at = theta;
      phi.informative = informative;
      for (Eigen::Index j = 0; j < size; ++j) {
        const double c = canonical(r, j);
        if (std::abs(c) <= 1e-14) continue;
        phi.support.push_back(members[j]);
        phi.coeffs.push_back(c);
      }
      out.push_back(std::move(phi));
    }
  }
  return out;
}

bool has_informative_restrictions(const DesignMatrices& dm, int cap) {
  if (dm.k() == 0) return false;
  const LevelSetIndex index = sufficient_levels(dm, cap);
  for (const auto& [key, members] : index.levels) {
    if (members.size() >= 2 && covariate_sums_vary(members, dm.x2)) return true;
  }
  return false;
}

double phi_conditional_logit(std::array<int, 2> y, const Matrix& x, const Vector& theta) {
  check_block(x, theta, 2, "phi_conditional_logit");
  if (y[0] == 1 && y[1] == 0) return std::exp(x.row(1).dot(theta));
  if (y[0] == 0 && y[1] == 1) return -std::exp(x.row(0).dot(theta));
  return 0.0;
}

std::vector<OutcomeCode> tetrad_level(const TetradCase& c) {
  // Agents i, j, k, l are 0..3.
  std::vector<OutcomeCode> members;
  switch (c.kind) {
    case TetradCase::Kind::AllOnes:
      members = {dyads_to_code({{0, 1}, {2, 3}}), dyads_to_code({{0, 2}, {1, 3}}),
                 dyads_to_code({{0, 3}, {1, 2}})};
      break;
    case TetradCase::Kind::AllTwos:
      members = {dyads_to_code({{0, 1}, {0, 2}, {1, 3}, {2, 3}}),
                 dyads_to_code({{0, 1}, {0, 3}, {1, 2}, {2, 3}}),
                 dyads_to_code({{0, 2}, {0, 3}, {1, 2}, {1, 3}})};
      break;
    case TetradCase::Kind::TwoTwoOneOne: {
      const int p = c.high_degree[0];
      const int q = c.high_degree[1];
      if (p == q || p < 0 || q < 0 || p > 3 || q > 3) {
        fail(ErrorCode::UnknownCase, "tetrad: high-degree pair must be two distinct agents in 0..3");
      }
      std::vector<int> rest;
      for (int v = 0; v < 4; ++v) {
        if (v != p && v != q) rest.push_back(v);
      }
      const int r = rest[0];
      const int s = rest[1];
      members = {dyads_to_code({{p, q}, {p, r}, {q, s}}), dyads_to_code({{p, q}, {p, s}, {q, r}})};
      break;
    }
    default:
      fail(ErrorCode::UnknownCase, "tetrad: unknown degree-sequence case");
  }
  std::sort(members.begin(), members.end());
  return members;
}

double phi_tetrad(std::array<int, 6> y, const Matrix& x, const Vector& theta, const TetradCase& c) {
  check_block(x, theta, 6, "phi_tetrad");
  return echelon_coefficient(encode_array(y), tetrad_level(c), x, theta, c.component);
}

double phi_config_c(std::array<int, 4> y, const Matrix& x, const Vector& theta) {
  check_block(x, theta, 4, "phi_config_c");
  if (y == std::array<int, 4>{1, 0, 0, 1}) return std::exp((x.row(1) + x.row(2)).dot(theta));
  if (y == std::array<int, 4>{0, 1, 1, 0}) return -std::exp((x.row(0) + x.row(3)).dot(theta));
  return 0.0;
}

double phi_config_f(std::array<int, 6> y, const Matrix& x, const Vector& theta) {
  check_block(x, theta, 6, "phi_config_f");
  if (y == std::array<int, 6>{1, 0, 1, 0, 1, 0}) {
    return std::exp((x.row(1) + x.row(3) + x.row(5)).dot(theta));
  }
  if (y == std::array<int, 6>{0, 1, 0, 1, 0, 1}) {
    return -std::exp((x.row(0) + x.row(2) + x.row(4)).dot(theta));
  }
  return 0.0;
}

MomentFunction conditional_logit_moment(const Matrix& x, const Vector& theta) {
  MomentFunction phi = make_two_point(2, encode_array(std::array<int, 2>{1, 0}),
                                      phi_conditional_logit({1, 0}, x, theta),
                                      encode_array(std::array<int, 2>{0, 1}),
                                      phi_conditional_logit({0, 1}, x, theta), theta,
                                      ClosedForm::CondLogit);
  phi.level_key = {1};
  phi.informative = covariate_sums_vary(phi.support, x);
  return phi;
}

MomentFunction tetrad_moment(const Matrix& x, const Vector& theta, const TetradCase& c) {
  check_block(x, theta, 6, "tetrad_moment");
  const auto members = tetrad_level(c);
  MomentFunction phi;
  phi.n = 6;
  phi.theta_at = theta;
  phi.closed_form = ClosedForm::Tetrad;
  for (OutcomeCode m : members) {
    const double coef = echelon_coefficient(m, members, x, theta, c.component);
    if (coef == 0.0) continue;
    phi.support.push_back(m);
    phi.coeffs.push_back(coef);
  }
  LevelKey degrees(4, 0);
  for (int p = 0; p < 4; ++p) {
    for (int q = p + 1; q < 4; ++q) {
      if (outcome_bit(members.front(), dyad_index(p, q), 6)) {
        ++degrees[p];
        ++degrees[q];
      }
    }
  }
  phi.level_key = degrees;
  phi.informative = covariate_sums_vary(phi.support, x);
  return phi;
}

MomentFunction config_c_moment(const Matrix& x, const Vector& theta) {
  MomentFunction phi = make_two_point(4, encode_array(std::array<int, 4>{1, 0, 0, 1}),
                                      phi_config_c({1, 0, 0, 1}, x, theta),
                                      encode_array(std::array<int, 4>{0, 1, 1, 0}),
                                      phi_config_c({0, 1, 1, 0}, x, theta), theta,
                                      ClosedForm::ConfigC);
  phi.level_key = {1, 1, 1, 1};
  phi.informative = covariate_sums_vary(phi.support, x);
  return phi;
}

MomentFunction config_f_moment(const Matrix& x, const Vector& theta) {
  MomentFunction phi = make_two_point(6, encode_array(std::array<int, 6>{1, 0, 1, 0, 1, 0}),
                                      phi_config_f({1, 0, 1, 0, 1, 0}, x, theta),
                                      encode_array(std::array<int, 6>{0, 1, 0, 1, 0, 1}),
                                      phi_config_f({0, 1, 0, 1, 0, 1}, x, theta), theta,
                                      ClosedForm::ConfigF);
  phi.level_key = {1, 1, 1, 1, 1, 1};
  phi.informative = covariate_sums_vary(phi.support, x);
  return phi;
}

DesignMatrices panel_design(const Matrix& x, const Vector& y) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(x.rows()), std::vector<int>{0});
  return block_design(rows, 1, x, y);
}

DesignMatrices tetrad_design(const Matrix& x, const Vector& y) {
  return block_design({{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, 4, x, y);
}

DesignMatrices config_c_design(const Matrix& x, const Vector& y) {
  // Columns: workers i, i', firms j, j'.
  return block_design({{0, 2}, {0, 3}, {1, 2}, {1, 3}}, 4, x, y);
}

DesignMatrices config_f_design(const Matrix& x, const Vector& y) {
  // Columns: workers i, i', i'', firms j, j', j''.
  return block_design({{0, 3}, {0, 4}, {1, 4}, {1, 5}, {2, 5}, {2, 3}}, 6, x, y);
}

double outcome_probability(OutcomeCode y, const DesignMatrices& dm, const Vector& a,
                           const Vector& theta) {
  return std::exp(loglik(y, dm, a, theta));
}

double brute_force_expectation(const std::function<double(OutcomeCode)>& phi,
                               const DesignMatrices& dm, const Vector& a, const Vector& theta,
                               int cap) {
  const int n = static_cast<int>(dm.n());
  check_cap(n, cap, "brute_force_expectation");
  const Vector eta = linear_index(dm, a, theta);
  double log_norm = 0.0;
  for (int i = 0; i < n; ++i) log_norm += softplus(eta(i));
  const OutcomeCode total = OutcomeCode{1} << n;
  double sum = 0.0;
  for (OutcomeCode y = 0; y < total; ++y) {
    const double value = phi(y);
    if (value == 0.0) continue;
    double log_p = -log_norm;
    for (int i = 0; i < n; ++i) {
      if (outcome_bit(y, i, n)) log_p += eta(i);
    }
    sum += value * std::exp(log_p);
  }
  return sum;
}

double brute_force_expectation(const MomentFunction& phi, const DesignMatrices& dm,
                               const Vector& a, const Vector& theta, int cap) {
  if (phi.n != dm.n()) {
    fail(ErrorCode::DimensionMismatch, "brute_force_expectation: moment and design sizes differ");
  }
  return brute_force_expectation([&](OutcomeCode y) { return phi(y); }, dm, a, theta, cap);
}

MomentSetBuilder config_c_builder() {
  return [](const DesignMatrices& dm, const Vector& theta) {
    return std::vector<MomentFunction>{config_c_moment(dm.x2, theta)};
  };
}

MomentSetBuilder config_f_builder() {
  return [](const DesignMatrices& dm, const Vector& theta) {
    return std::vector<MomentFunction>{config_f_moment(dm.x2, theta)};
  };
}

MomentSetBuilder conditional_logit_builder() {
  return [](const DesignMatrices& dm, const Vector& theta) {
    return std::vector<MomentFunction>{conditional_logit_moment(dm.x2, theta)};
  };
}

MomentSetBuilder tetrad_builder() {
  return [](const DesignMatrices& dm, const Vector& theta) {
    std::vector<MomentFunction> out;
    for (auto kind : {TetradCase::Kind::AllOnes, TetradCase::Kind::AllTwos}) {
      for (int component = 0; component < 2; ++component) {
        out.push_back(tetrad_moment(dm.x2, theta, {kind, {0, 1}, component}));
      }
    }
    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        out.push_back(tetrad_moment(dm.x2, theta, {TetradCase::Kind::TwoTwoOneOne, {p, q}, 0}));
      }
    }
    return out;
  };
}

MomentSetBuilder discovered_builder(int cap) {
  return [cap](const DesignMatrices& dm, const Vector& theta) {
    return discover_moments(dm, theta, cap);
  };
}

namespace {

// Blocks preprocessed for repeated criterion evaluation. Each informative
// moment is interacted with its instrument, the covariate-sum difference
// between the first and last outcome of its support, giving k slots per
// moment. A block whose observed outcome lies off the support of all its
// informative moments contributes zero at every theta and is skipped.
class MomentSystem {
 public:
  MomentSystem(const std::vector<DataBlock>& blocks, const Vector& probe) : blocks_(blocks) {
    const Eigen::Index k = probe.size();
    std::map<std::string, int> slot_ids;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const DataBlock& block = blocks[b];
      check_theta(probe, block.dm, "estimate_theta_gmm");
      const OutcomeCode y = encode_outcome(block.dm.y);
      const auto moments = block.builder(block.dm, probe);
      Active entry{b, y, {}, {}};
      bool active = false;
      bool informative = false;
      for (std::size_t s = 0; s < moments.size(); ++s) {
        const MomentFunction& phi = moments[s];
        if (!phi.informative || phi.support.empty()) {
          entry.slots.push_back(-1);
          entry.instruments.emplace_back();
          continue;
        }
        informative = true;
        const std::string key = block.label + "#" + std::to_string(s);
        auto [it, inserted] = slot_ids.emplace(key, static_cast<int>(slot_names_.size()));
        if (inserted) {
          for (Eigen::Index j = 0; j < k; ++j) {
            slot_names_.push_back(k == 1 ? key : key + "[" + std::to_string(j) + "]");
          }
        }
        entry.slots.push_back(it->second);
        entry.instruments.push_back(outcome_covariate_sum(phi.support.front(), block.dm.x2) -
                                    outcome_covariate_sum(phi.support.back(), block.dm.x2));
        if (std::binary_search(phi.support.begin(), phi.support.end(), y)) active = true;
      }
      if (informative) ++informative_blocks_;
      if (active) active_.push_back(std::move(entry));
    }
  }

  int slots() const { return static_cast<int>(slot_names_.size()); }
  int informative_blocks() const { return informative_blocks_; }
  std::size_t active_blocks() const { return active_.size(); }
  std::size_t total_blocks() const { return blocks_.size(); }
  const std::vector<std::string>& slot_names() const { return slot_names_; }

  /// Contribution of every active block at theta, one column per block.
  Matrix contributions(const Vector& theta) const {
    Matrix h = Matrix::Zero(slots(), static_cast<Eigen::Index>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const auto& entry = active_[a];
      const DataBlock& block = blocks_[entry.block];
      const auto moments = block.builder(block.dm, theta);
      for (std::size_t s = 0; s < moments.size() && s < entry.slots.size(); ++s) {
        if (entry.slots[s] < 0) continue;
        const double v = normalized_value(moments[s], entry.y);
        const Vector& z = entry.instruments[s];
        for (Eigen::Index j = 0; j < z.size(); ++j) {
          h(entry.slots[s] + j, static_cast<Eigen::Index>(a)) += z(j) * v;
        }
      }
    }
    return h;
  }

  /// Weighted sum of contributions, weights indexed by original block.
  Vector stacked(const Vector& theta, const std::vector<double>& block_weight) const {
    Vector g = Vector::Zero(slots());
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const auto& entry = active_[a];
      const double w = block_weight[entry.block];
      if (w == 0.0) continue;
      const DataBlock& block = blocks_[entry.block];
      const auto moments = block.builder(block.dm, theta);
      for (std::size_t s = 0; s < moments.size() && s < entry.slots.size(); ++s) {
        if (entry.slots[s] < 0) continue;
        const double v = w * normalized_value(moments[s], entry.y);
        if (v == 0.0) continue;
        const Vector& z = entry.instruments[s];
        for (Eigen::Index j = 0; j < z.size(); ++j) g(entry.slots[s] + j) += z(j) * v;
      }
    }
    return g;
  }

 private:
  struct Active {
    std::size_t block;
    OutcomeCode y;
    std::vector<int> slots;  // first slot of each moment, -1 if unused
    std::vector<Vector> instruments;
  };

  // Unit absolute coefficient sum, positive leading coefficient. For a
  // two-point moment this is 1{y = front} - P(front | level).
  static double normalized_value(const MomentFunction& phi, OutcomeCode y) {
    double norm1 = 0.0;
    for (double c : phi.coeffs) norm1 += std::abs(c);
    if (norm1 == 0.0) return 0.0;
    const double sign = phi.coeffs.front() < 0.0 ? -1.0 : 1.0;
    return sign * phi(y) / norm1;
  }

  const std::vector<DataBlock>& blocks_;
  std::vector<std::string> slot_names_;
  std::vector<Active> active_;
  int informative_blocks_ = 0;
};

struct Minimum {
  Vector theta;
  double value = 0.0;
  int iterations = 0;
};

Minimum minimize_scalar(const std::function<double(double)>& f, const GmmOptions& opt) {
  const int points = std::max(opt.grid_points, 3);
  const double step = (opt.upper - opt.lower) / (points - 1);
  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double v = f(opt.lower + i * step);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  double lo = opt.lower + std::max(best - 1, 0) * step;
  double hi = opt.lower + std::min(best + 1, points - 1) * step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  int iter = 0;
  while (hi - lo > opt.tol * (1.0 + std::abs(lo))) {
    if (++iter > opt.max_iter) {
      fail(ErrorCode::NonConvergence, "estimate_theta_gmm: golden-section search did not converge");
    }
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  Minimum out;
  out.theta = Vector::Constant(1, 0.5 * (lo + hi));
  out.value = f(out.theta(0));
  if (best_value < out.value) {
    out.theta(0) = opt.lower + best * step;
    out.value = best_value;
  }
  out.iterations = iter;
  return out;
}

Minimum nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                    const GmmOptions& opt) {
  const Eigen::Index dim = start.size();
  std::vector<Vector> simplex(dim + 1, start);
  std::vector<double> values(dim + 1);
  for (Eigen::Index i = 0; i < dim; ++i) simplex[i + 1](i) += 0.5;
  for (Eigen::Index i = 0; i <= dim; ++i) values[i] = f(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  int iter = 0;
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const Vector& best = simplex[order.front()];
    double diameter = 0.0;
    for (const auto& v : simplex) diameter = std::max(diameter, (v - best).cwiseAbs().maxCoeff());
    if (diameter <= opt.tol * (1.0 + best.cwiseAbs().maxCoeff())) break;
    if (++iter > opt.max_iter) {
      fail(ErrorCode::NonConvergence, "estimate_theta_gmm: Nelder-Mead did not converge");
    }
    const std::size_t worst = order.back();
    Vector centroid = Vector::Zero(dim);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += simplex[order[i]];
    centroid /= static_cast<double>(dim);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double fr = f(reflected);
    if (fr < values[order.front()]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[order[order.size() - 2]]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const Vector contracted = centroid + 0.5 * (simplex[worst] - centroid);
    const double fk = f(contracted);
    if (fk < values[worst]) {
      simplex[worst] = contracted;
      values[worst] = fk;
      continue;
    }
    const Vector anchor = simplex[order.front()];
    for (std::size_t i = 1; i < order.size(); ++i) {
      simplex[order[i]] = anchor + 0.5 * (simplex[order[i]] - anchor);
      values[order[i]] = f(simplex[order[i]]);
    }
  }
  Minimum out;
  out.theta = simplex[order.front()];
  out.value = values[order.front()];
  out.iterations = iter;
  return out;
}

Minimum minimize(const MomentSystem& system, const std::vector<double>& weights,
                 const Matrix& w, Eigen::Index dim, const GmmOptions& opt) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double scale = total > 0.0 ? 1.0 / (total * total) : 1.0;
  auto criterion = [&](const Vector& theta) {
    const Vector g = system.stacked(theta, weights);
    return scale * g.dot(w * g);
  };
  if (dim == 1) {
    return minimize_scalar([&](double t) { return criterion(Vector::Constant(1, t)); }, opt);
  }
  return nelder_mead(criterion, Vector::Zero(dim), opt);
}

}  // namespace

std::map<std::string, double> stacked_moments(const std::vector<DataBlock>& blocks,
                                              const Vector& theta) {
  const MomentSystem system(blocks, theta);
  const Vector g = system.stacked(theta, std::vector<double>(blocks.size(), 1.0));
  std::map<std::string, double> out;
  for (int s = 0; s < system.slots(); ++s) out[system.slot_names()[s]] = g(s);
  return out;
}

double gmm_criterion(const std::vector<DataBlock>& blocks, const Vector& theta) {
  const MomentSystem system(blocks, theta);
  const Vector g = system.stacked(theta, std::vector<double>(blocks.size(), 1.0));
  const double b = static_cast<double>(blocks.size());
  return g.squaredNorm() / (b * b);
}

EstimateResult estimate_theta_gmm(const std::vector<DataBlock>& blocks, const GmmOptions& options) {
  if (blocks.empty()) fail(ErrorCode::NoInformativeBlocks, "estimate_theta_gmm: no data blocks");
  const Eigen::Index dim = blocks.front().dm.k();
  if (dim == 0) fail(ErrorCode::NoInformativeBlocks, "estimate_theta_gmm: no covariates");
  const Vector probe = Vector::Constant(dim, 0.5 * (options.lower + options.upper) + 0.1);
  const MomentSystem system(blocks, probe);
  if (system.slots() == 0 || system.informative_blocks() == 0) {
    fail(ErrorCode::NoInformativeBlocks,
         "estimate_theta_gmm: no block carries an informative moment restriction");
  }

  const std::vector<double> unit(blocks.size(), 1.0);
  Matrix weight = Matrix::Identity(system.slots(), system.slots());
  Minimum best = minimize(system, unit, weight, dim, options);
  if (options.weight == WeightRule::TwoStep) {
    const Matrix h = system.contributions(best.theta);
    const Matrix s = h * h.transpose() / static_cast<double>(blocks.size());
    weight = linalg::pinv(s, 1e-10);
    best = minimize(system, unit, weight, dim, options);
  }

  EstimateResult out;
  out.estimate.assign(best.theta.data(), best.theta.data() + best.theta.size());
  out.n = blocks.size();
  out.seed = options.seed;
  out.diagnostics["criterion"] = best.value;
  out.diagnostics["iterations"] = best.iterations;
  out.diagnostics["informative_blocks"] = system.informative_blocks();
  out.diagnostics["active_blocks"] = static_cast<double>(system.active_blocks());
  out.diagnostics["moment_slots"] = system.slots();

  if (options.bootstrap_reps > 0) {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, blocks.size() - 1);
    std::vector<Vector> draws;
    for (int r = 0; r < options.bootstrap_reps; ++r) {
      std::vector<double> counts(blocks.size(), 0.0);
      for (std::size_t i = 0; i < blocks.size(); ++i) counts[pick(rng)] += 1.0;
      draws.push_back(minimize(system, counts, weight, dim, options).theta);
    }
    Vector mean = Vector::Zero(dim);
    for (const auto& d : draws) mean += d;
    mean /= static_cast<double>(draws.size());
    Vector var = Vector::Zero(dim);
    for (const auto& d : draws) var += (d - mean).cwiseAbs2();
    var /= std::max<double>(1.0, static_cast<double>(draws.size()) - 1.0);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const std::string name = dim == 1 ? "bootstrap_se" : "bootstrap_se[" + std::to_string(j) + "]";
      out.diagnostics[name] = std::sqrt(var(j));
    }
    out.diagnostics["bootstrap_reps"] = options.bootstrap_reps;
  }
  return out;
}

}  // namespace fdnet::logit
