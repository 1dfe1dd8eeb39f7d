#include "fdnet/error.hpp"
#include "fdnet/logitmodel.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace fdnet;
using namespace fdnet::logit;

namespace {

Matrix random_x(Eigen::Index rows, std::mt19937_64& rng) { return oracle::random_matrix(rows, 1, rng); }

double enumerate(const MomentFunction& phi, const DesignMatrices& dm, const Vector& a, const Vector& theta) {
  return oracle::enumerate_expectation([&](std::uint64_t y) { return phi(y); }, dm.dense_x1(), dm.x2, a,
                                       theta);
}

// Projection residual of v onto the span of the dense vectors of `basis`.
double span_residual(const Vector& v, const std::vector<MomentFunction>& basis) {
  Matrix b(v.size(), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) b.col(static_cast<Eigen::Index>(j)) = basis[j].dense();
  const Vector coef = b.completeOrthogonalDecomposition().solve(v);
  return (b * coef - v).norm();
}

// Configurations A, B, D, E as x1 designs over (y_it, y_i,t+1, ...); columns workers then firms.
DesignMatrices config_design(char kind, const Matrix& x) {
  std::vector<std::vector<int>> rows;
  int cols = 0;
  switch (kind) {
    case 'A': rows = {{0, 1}, {0, 1}}; cols = 2; break;                          // stayer
    case 'B': rows = {{0, 1}, {0, 2}}; cols = 3; break;                          // single mover
    case 'D': rows = {{0, 2}, {0, 3}, {1, 4}, {1, 5}}; cols = 6; break;          // movers, disjoint firms
    case 'E': rows = {{0, 2}, {0, 3}, {1, 2}, {1, 4}}; cols = 5; break;          // movers from the same firm
    default: FAIL("unknown configuration");
  }
  Matrix x1 = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c : rows[r]) x1(static_cast<Eigen::Index>(r), c) = 1.0;
  }
  return DesignMatrices::from_dense(Vector::Zero(x1.rows()), x1, x);
}

}  // namespace

TEST_CASE("outcome encoding is lexicographic") {
  CHECK(encode_outcome(std::vector<int>{1, 0, 0, 1}) == 9u);
  CHECK(to_bitstring(9, 4) == "1001");
  CHECK(decode_outcome(6, 4) == std::vector<int>{0, 1, 1, 0});
  CHECK(encode_outcome(std::vector<int>{0, 1, 1, 0}) < encode_outcome(std::vector<int>{1, 0, 0, 1}));
  CHECK_THROWS_AS(encode_outcome(std::vector<int>{0, 2}), Error);
}

TEST_CASE("loglik examples") {
  const DesignMatrices three = panel_design(Matrix::Zero(3, 1));
  CHECK(std::abs(loglik(Vector{{1.0, 0.0, 1.0}}, three, Vector::Zero(1), Vector::Zero(1)) + 3.0 * std::log(2.0)) <
        1e-14);
  const DesignMatrices one = panel_design(Matrix::Zero(1, 1));
  CHECK(std::abs(loglik(Vector{{1.0}}, one, Vector::Constant(1, 0.5), Vector::Zero(1)) -
                 (0.5 - std::log1p(std::exp(0.5)))) < 1e-14);
  // stable for large indices
  CHECK(std::isfinite(loglik(Vector{{0.0}}, one, Vector::Constant(1, 700.0), Vector::Zero(1))));
  CHECK(std::abs(loglik(Vector{{1.0}}, one, Vector::Constant(1, 700.0), Vector::Zero(1))) < 1e-12);
  CHECK_THROWS_AS(loglik(Vector{{1.0, 0.0}}, one, Vector::Zero(1), Vector::Zero(1)), Error);

  std::mt19937_64 rng(3);
  for (int n = 1; n <= 10; n += 3) {
    const DesignMatrices dm = panel_design(random_x(n, rng));
    const Vector a = oracle::random_vector(1, rng);
    const Vector theta = oracle::random_vector(1, rng);
    double total = 0.0;
    for (OutcomeCode y = 0; y < (OutcomeCode{1} << n); ++y) total += outcome_probability(y, dm, a, theta);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("sufficient levels") {
  const LevelSetIndex panel = sufficient_levels(panel_design(Matrix::Zero(2, 1)));
  CHECK(panel.levels.size() == 3);
  CHECK(panel.levels.at({1}) == std::vector<OutcomeCode>{encode_outcome(std::vector<int>{0, 1}),
                                                         encode_outcome(std::vector<int>{1, 0})});

  const LevelSetIndex b = sufficient_levels(config_design('B', Matrix::Zero(2, 1)));
  for (const auto& [key, members] : b.levels) CHECK(members.size() == 1);

  const LevelSetIndex c = sufficient_levels(config_c_design(Matrix::Zero(4, 1)));
  CHECK(c.levels.at({1, 1, 1, 1}) == std::vector<OutcomeCode>{encode_outcome(std::vector<int>{0, 1, 1, 0}),
                                                              encode_outcome(std::vector<int>{1, 0, 0, 1})});

  for (const DesignMatrices& dm : {tetrad_design(Matrix::Zero(6, 1)), config_f_design(Matrix::Zero(6, 1)),
                                   config_design('E', Matrix::Zero(4, 1))}) {
    const LevelSetIndex idx = sufficient_levels(dm);
    CHECK(idx.total_outcomes() == (std::size_t{1} << dm.n()));
    const Matrix x1 = dm.dense_x1();
    for (const auto& [key, members] : idx.levels) {
      for (OutcomeCode y : members) {
        for (Eigen::Index col = 0; col < x1.cols(); ++col) {
          long s = 0;
          for (int i = 0; i < dm.n(); ++i) s += oracle::bit(y, i, static_cast<int>(dm.n())) * static_cast<long>(x1(i, col));
          CHECK(s == key[col]);
        }
      }
    }
  }

  CHECK_THROWS_AS(sufficient_levels(panel_design(Matrix::Zero(21, 1))), Error);
}

TEST_CASE("discovery on the two-period panel") {
  const DesignMatrices dm = panel_design(Matrix{{0.0}, {1.0}});
  const auto moments = discover_moments(dm, Vector::Constant(1, std::log(2.0)));
  REQUIRE(moments.size() == 1);
  const MomentFunction& phi = moments[0];
  CHECK(phi.level_key == LevelKey{1});
  CHECK(phi.informative);
  // proportional to phi(1,0) = 2, phi(0,1) = -1
  const double ratio = phi(encode_outcome(std::vector<int>{1, 0})) / phi(encode_outcome(std::vector<int>{0, 1}));
  CHECK(std::abs(ratio + 2.0) < 1e-12);
  CHECK(phi.coeffs.front() == doctest::Approx(1.0));
}

TEST_CASE("discovery flags configuration A as uninformative") {
  const auto moments = discover_moments(config_design('A', Matrix{{0.4}, {0.4}}), Vector::Constant(1, 0.9));
  REQUIRE(!moments.empty());
  for (const auto& phi : moments) CHECK_FALSE(phi.informative);
}

TEST_CASE("informativeness reproduces the configuration dichotomy") {
  // covariates constant within spells and distinct across spells
  const Matrix x2{{0.3}, {1.1}};
  const Matrix x4{{0.3}, {1.1}, {-0.7}, {2.0}};
  CHECK_FALSE(has_informative_restrictions(config_design('A', Matrix{{0.3}, {0.3}})));
  CHECK_FALSE(has_informative_restrictions(config_design('B', x2)));
  CHECK(has_informative_restrictions(config_c_design(x4)));
  CHECK_FALSE(has_informative_restrictions(config_design('D', x4)));
  CHECK_FALSE(has_informative_restrictions(config_design('E', x4)));
  CHECK(has_informative_restrictions(config_f_design(Matrix{{0.3}, {1.1}, {-0.7}, {2.0}, {0.5}, {-1.4}})));
}

TEST_CASE("discovered moments satisfy the level restriction and have zero conditional mean") {
  std::mt19937_64 rng(5);
  const std::vector<DesignMatrices> designs{panel_design(random_x(3, rng)), config_c_design(random_x(4, rng)),
                                            config_f_design(random_x(6, rng)), tetrad_design(random_x(6, rng))};
  for (const auto& dm : designs) {
    const Vector theta = oracle::random_vector(1, rng);
    const auto moments = discover_moments(dm, theta);
    REQUIRE(!moments.empty());
    for (const auto& phi : moments) {
      CHECK(std::abs(level_residual(phi, dm, theta)) < 1e-10);
      CHECK(phi.coeffs.front() == doctest::Approx(1.0));
      for (int draw = 0; draw < 10; ++draw) {
        const Vector a = oracle::random_vector(dm.m(), rng);
        CHECK(std::abs(enumerate(phi, dm, a, theta)) < 1e-10);
        CHECK(std::abs(brute_force_expectation(phi, dm, a, theta)) < 1e-10);
      }
    }
  }
}

TEST_CASE("configuration C discovery finds one informative restriction") {
  std::mt19937_64 rng(9);
  const Matrix x = random_x(4, rng);
  const Vector theta = Vector::Constant(1, 0.5);
  const DesignMatrices dm = config_c_design(x);
  int informative = 0;
  for (const auto& phi : discover_moments(dm, theta)) {
    if (!phi.informative) continue;
    ++informative;
    CHECK(phi.level_key == LevelKey{1, 1, 1, 1});
  }
  CHECK(informative == 1);
}

TEST_CASE("closed forms") {
  const double t = std::log(2.0);
  const Matrix x{{0.0}, {1.0}};
  CHECK(phi_conditional_logit({1, 0}, x, Vector::Constant(1, t)) == doctest::Approx(2.0));
  CHECK(phi_conditional_logit({0, 1}, x, Vector::Constant(1, t)) == doctest::Approx(-1.0));
  CHECK(phi_conditional_logit({1, 1}, x, Vector::Constant(1, t)) == 0.0);
  const Matrix same{{0.4}, {0.4}};
  CHECK(phi_conditional_logit({1, 0}, same, Vector::Constant(1, 0.8)) ==
        doctest::Approx(-phi_conditional_logit({0, 1}, same, Vector::Constant(1, 0.8))));

  const DesignMatrices panel = panel_design(x);
  const double cl = brute_force_expectation(conditional_logit_moment(x, Vector::Constant(1, 0.7)), panel,
                                            Vector::Constant(1, -0.3), Vector::Constant(1, 0.7));
  CHECK(std::abs(cl) < 1e-12);

  const Matrix x4{{0.2}, {-0.5}, {1.0}, {0.3}};
  const Vector th = Vector::Constant(1, 0.5);
  CHECK(phi_config_c({1, 0, 0, 1}, x4, th) == doctest::Approx(std::exp((-0.5 + 1.0) * 0.5)));
  CHECK(phi_config_c({0, 1, 1, 0}, x4, th) == doctest::Approx(-std::exp((0.2 + 0.3) * 0.5)));
  CHECK(phi_config_c({1, 1, 0, 0}, x4, th) == 0.0);
  CHECK(phi_config_c({1, 0, 0, 1}, x4, Vector::Zero(1)) == 1.0);
  CHECK(phi_config_c({0, 1, 1, 0}, x4, Vector::Zero(1)) == -1.0);
  const Vector a4{{0.2, -0.4, 0.1, 0.3}};
  CHECK(std::abs(brute_force_expectation(config_c_moment(x4, th), config_c_design(x4), a4, th)) < 1e-12);

  std::mt19937_64 rng(77);
  const Matrix x6 = random_x(6, rng);
  const MomentFunction f = config_f_moment(x6, Vector::Constant(1, 1.2));
  CHECK(f.support == std::vector<OutcomeCode>{encode_outcome(std::vector<int>{0, 1, 0, 1, 0, 1}),
                                              encode_outcome(std::vector<int>{1, 0, 1, 0, 1, 0})});
  CHECK(phi_config_f({1, 0, 1, 0, 1, 0}, x6, Vector::Zero(1)) == 1.0);
  CHECK(phi_config_f({0, 1, 0, 1, 0, 1}, x6, Vector::Zero(1)) == -1.0);
  CHECK(std::abs(brute_force_expectation(f, config_f_design(x6), oracle::random_vector(6, rng),
                                         Vector::Constant(1, 1.2))) < 1e-12);
}

TEST_CASE("tetrad closed forms") {
  const auto all_ones = tetrad_level({TetradCase::Kind::AllOnes, {0, 1}, 0});
  std::vector<OutcomeCode> expected{encode_outcome(std::vector<int>{1, 0, 0, 0, 0, 1}),
                                    encode_outcome(std::vector<int>{0, 1, 0, 0, 1, 0}),
                                    encode_outcome(std::vector<int>{0, 0, 1, 1, 0, 0})};
  std::sort(expected.begin(), expected.end());
  CHECK(all_ones == expected);

  // theta = 0: unit weights, each direction is e_c - e_last
  const Matrix x6 = Matrix::Ones(6, 1);
  const MomentFunction m0 = tetrad_moment(x6, Vector::Zero(1), {TetradCase::Kind::AllOnes, {0, 1}, 0});
  CHECK(m0.coeffs == std::vector<double>{1.0, -1.0});

  std::mt19937_64 rng(13);
  const Matrix x = random_x(6, rng);
  const Vector theta = Vector::Constant(1, 0.8);
  const DesignMatrices dm = tetrad_design(x);
  const auto discovered = discover_moments(dm, theta);
  std::vector<TetradCase> cases;
  for (auto kind : {TetradCase::Kind::AllOnes, TetradCase::Kind::AllTwos}) {
    for (int c = 0; c < 2; ++c) cases.push_back({kind, {0, 1}, c});
  }
  for (int p = 0; p < 4; ++p) {
    for (int q = p + 1; q < 4; ++q) cases.push_back({TetradCase::Kind::TwoTwoOneOne, {p, q}, 0});
  }
  for (const auto& c : cases) {
    const MomentFunction phi = tetrad_moment(x, theta, c);
    for (int draw = 0; draw < 5; ++draw) {
      CHECK(std::abs(brute_force_expectation(phi, dm, oracle::random_vector(4, rng), theta)) < 1e-12);
    }
    CHECK(span_residual(phi.dense(), discovered) < 1e-10);
    // pointwise closed form agrees with the packaged moment
    for (OutcomeCode y : phi.support) {
      std::array<int, 6> bits{};
      for (int i = 0; i < 6; ++i) bits[i] = oracle::bit(y, i, 6);
      CHECK(phi_tetrad(bits, x, theta, c) == doctest::Approx(phi(y)));
    }
  }
  CHECK_THROWS_AS(tetrad_level({TetradCase::Kind::TwoTwoOneOne, {1, 1}, 0}), Error);
  CHECK_THROWS_AS(tetrad_moment(x, theta, {TetradCase::Kind::AllOnes, {0, 1}, 2}), Error);
}

TEST_CASE("closed forms lie in the discovered span") {
  std::mt19937_64 rng(19);
  const Vector theta = Vector::Constant(1, -0.6);
  const Matrix x2 = random_x(2, rng);
  CHECK(span_residual(conditional_logit_moment(x2, theta).dense(), discover_moments(panel_design(x2), theta)) <
        1e-10);
  const Matrix x4 = random_x(4, rng);
  CHECK(span_residual(config_c_moment(x4, theta).dense(), discover_moments(config_c_design(x4), theta)) < 1e-10);
  const Matrix x6 = random_x(6, rng);
  CHECK(span_residual(config_f_moment(x6, theta).dense(), discover_moments(config_f_design(x6), theta)) < 1e-10);
}

TEST_CASE("brute force expectation basics") {
  const DesignMatrices dm = config_c_design(Matrix::Zero(4, 1));
  const Vector a = Vector::Zero(4);
  MomentFunction indicator;
  indicator.n = 4;
  indicator.support = {5};
  indicator.coeffs = {1.0};
  CHECK(brute_force_expectation(indicator, dm, a, Vector::Zero(1)) > 0.0);
  MomentFunction zero;
  zero.n = 4;
  CHECK(brute_force_expectation(zero, dm, a, Vector::Zero(1)) == 0.0);
  CHECK_THROWS_AS(brute_force_expectation(zero, panel_design(Matrix::Zero(25, 1)), Vector::Zero(1), Vector::Zero(1)),
                  Error);
}

TEST_CASE("GMM: no informative blocks") {
  std::vector<DataBlock> blocks;
  for (int b = 0; b < 5; ++b) {
    DesignMatrices dm = config_design('D', Matrix{{0.3}, {1.1}, {-0.7}, {2.0}});
    dm = dm.with_outcome(Vector{{1.0, 0.0, 0.0, 1.0}});
    blocks.push_back({dm, discovered_builder(), "D"});
  }
  try {
    estimate_theta_gmm(blocks);
    FAIL("expected NoInformativeBlocks");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoInformativeBlocks);
  }
}

TEST_CASE("GMM: population criterion vanishes at the truth") {
  // the expected stacked moment at theta0 is a sum of zero conditional means
  std::mt19937_64 rng(23);
  const Vector theta0 = Vector::Constant(1, 1.0);
  double total = 0.0;
  for (int b = 0; b < 50; ++b) {
    const Matrix x = random_x(4, rng);
    const DesignMatrices dm = config_c_design(x);
    total += brute_force_expectation(config_c_moment(x, theta0), dm, oracle::random_vector(4, rng), theta0);
  }
  CHECK(std::abs(total) < 1e-10);
}

TEST_CASE("GMM: scale invariance and two-step weighting") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Vector theta0 = Vector::Constant(1, 1.0);
  std::vector<DataBlock> blocks, scaled;
  for (int b = 0; b < 400; ++b) {
    const Matrix x = random_x(4, rng);
    DesignMatrices dm = config_c_design(x);
    const Vector a = oracle::random_vector(4, rng);
    const Vector eta = dm.x1 * a + dm.x2 * theta0;
    Vector y(4);
    for (int i = 0; i < 4; ++i) y(i) = unif(rng) < oracle::logistic(eta(i)) ? 1.0 : 0.0;
    dm = dm.with_outcome(y);
    blocks.push_back({dm, config_c_builder(), "C"});
    const MomentSetBuilder base = config_c_builder();
    scaled.push_back({dm,
                      [base](const DesignMatrices& d, const Vector& t) {
                        auto out = base(d, t);
                        for (auto& phi : out) {
                          for (double& c : phi.coeffs) c *= 7.5;
                        }
                        return out;
                      },
                      "C"});
  }
  const EstimateResult r1 = estimate_theta_gmm(blocks);
  const EstimateResult r2 = estimate_theta_gmm(scaled);
  // a quadratic minimum resolves the argmin to about sqrt(machine epsilon)
  CHECK(std::abs(r1.scalar() - r2.scalar()) < 1e-6);
  GmmOptions two;
  two.weight = WeightRule::TwoStep;
  const EstimateResult r3 = estimate_theta_gmm(blocks, two);
  CHECK(std::abs(r3.scalar() - r1.scalar()) < 1e-6);  // single slot: weighting is a scalar
  CHECK(r1.diagnostics.at("criterion") >= 0.0);
  CHECK(r1.diagnostics.at("criterion") <= gmm_criterion(blocks, Vector::Constant(1, r1.scalar() + 0.1)));
}

TEST_CASE("GMM: vector theta by Nelder-Mead") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Vector theta0{{0.8, -0.5}};
  std::vector<DataBlock> blocks;
  for (int b = 0; b < 3000; ++b) {
    const Matrix x = oracle::random_matrix(2, 2, rng);
    DesignMatrices dm = panel_design(x);
    const double a = oracle::random_vector(1, rng)(0);
    Vector y(2);
    for (int i = 0; i < 2; ++i) y(i) = unif(rng) < oracle::logistic(a + x.row(i).dot(theta0)) ? 1.0 : 0.0;
    blocks.push_back({dm.with_outcome(y), conditional_logit_builder(), "panel"});
  }
  GmmOptions opt;
  opt.bootstrap_reps = 30;
  const EstimateResult r = estimate_theta_gmm(blocks, opt);
  REQUIRE(r.estimate.size() == 2);
  for (int j = 0; j < 2; ++j) {
    const double se = r.diagnostics.at("bootstrap_se[" + std::to_string(j) + "]");
    CHECK(se > 0.0);
    CHECK(std::abs(r.estimate[j] - theta0(j)) < 4.0 * se);
  }
}

TEST_CASE("GMM on T = 2 panels is the conditional logit MLE") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<DataBlock> blocks;
  std::vector<std::pair<double, int>> switchers;  // (x2 - x1, 1 if y = (0,1))
  for (int b = 0; b < 2000; ++b) {
    const Matrix x = random_x(2, rng);
    const double a = oracle::random_vector(1, rng)(0);
    Vector y(2);
    for (int i = 0; i < 2; ++i) y(i) = unif(rng) < oracle::logistic(a + 0.6 * x(i, 0)) ? 1.0 : 0.0;
    blocks.push_back({panel_design(x).with_outcome(y), conditional_logit_builder(), "panel"});
    if (y(0) != y(1)) switchers.emplace_back(x(1, 0) - x(0, 0), static_cast<int>(y(1)));
  }
  // Newton steps on sum log Lambda(+-d theta)
  double t = 0.0;
  for (int it = 0; it < 50; ++it) {
    double score = 0.0, info = 0.0;
    for (auto [d, up] : switchers) {
      const double p = oracle::logistic(d * t);
      score += d * (up - p);
      info += d * d * p * (1 - p);
    }
    t += score / info;
  }
  const EstimateResult r = estimate_theta_gmm(blocks);
  CHECK(std::abs(r.scalar() - t) < 1e-6);
}
