// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Expected values come from the oracles in oracles.hpp or from
// closed forms computed here.

#include "fdnet/avgeff.hpp"
#include "fdnet/cli.hpp"
#include "fdnet/error.hpp"
#include "fdnet/linmodel.hpp"
#include "fdnet/logitmodel.hpp"
#include "fdnet/simkit.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

using namespace fdnet;
using linalg::Matrix;
using linalg::Vector;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, Clock::time_point start) {
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("%s %d: %s [%s; %.1fs]\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// E[y'Cy + b'y + d] for y ~ N(mu, s2 I).
double gaussian_quadratic(const lin::QuadraticFunctional& fn, const Vector& mu, double s2) {
  return mu.dot(fn.c * mu) + s2 * fn.c.trace() + fn.b.dot(mu) + fn.d;
}

// Worker/firm incidence with two ones per row; every column used at least once when possible.
Matrix random_incidence(int n, int workers, int firms, std::mt19937_64& rng) {
  Matrix x1 = Matrix::Zero(n, workers + firms);
  for (int r = 0; r < n; ++r) {
    x1(r, r < workers ? r : static_cast<int>(rng() % workers)) = 1.0;
    x1(r, workers + (r < firms ? r : static_cast<int>(rng() % firms))) = 1.0;
  }
  return x1;
}

void criterion1() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0, worst_path = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 10 + static_cast<int>(rng() % 51);
    const int workers = 2 + static_cast<int>(rng() % (n / 3));
    const int firms = 1 + static_cast<int>(rng() % (n / 4));
    const int k = 1 + static_cast<int>(rng() % 3);
    const Matrix x1 = random_incidence(n, workers, firms, rng);
    const Matrix x2 = oracle::random_matrix(n, k, rng);
    const Vector a = oracle::random_vector(x1.cols(), rng);
    const lin::LinearParams params{oracle::random_vector(k, rng), 0.2 + std::exp(normal(rng))};
    const DesignMatrices dm = DesignMatrices::from_dense(Vector::Zero(n), x1, x2);
    const Vector mu = x1 * a + x2 * params.beta;

    const auto fb = lin::phi_beta_functional(dm, params.beta);
    worst = std::max(worst, (fb.c * mu + fb.offset).cwiseAbs().maxCoeff());
    const auto fs = lin::phi_sigma2_functional(dm, params);
    worst = std::max(worst, std::abs(gaussian_quadratic(fs, mu, params.sigma2)));

    // the functionals are the library's moment functions
    const Vector y = mu + std::sqrt(params.sigma2) * oracle::random_vector(n, rng);
    worst_path = std::max(worst_path, (fb.c * y + fb.offset - lin::phi_beta(y, dm, params.beta)).cwiseAbs().maxCoeff());
    worst_path = std::max(worst_path, std::abs(y.dot(fs.c * y) + fs.b.dot(y) + fs.d - lin::phi_sigma2(y, dm, params)));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(1, worst < 1e-9 && worst_path < 1e-9 && secs < 10.0, "linear moment validity, 100 designs",
         "max |E phi| " + fmt(worst) + ", path mismatch " + fmt(worst_path), start);
}

void criterion2() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0, worst_path = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 15 + static_cast<int>(rng() % 40);
    const int m = 2 + static_cast<int>(rng() % 8);
    const Matrix x1 = oracle::random_matrix(n, m, rng);
    const Matrix x2 = oracle::random_matrix(n, 1, rng);
    Matrix q = oracle::random_matrix(m, m, rng);
    q = ((q + q.transpose()) / 2).eval();
    const lin::QuadraticForm qf(q);
    const Vector a = oracle::random_vector(m, rng);
    const lin::LinearParams params{oracle::random_vector(1, rng), 0.5 + trial % 3};
    const DesignMatrices dm = DesignMatrices::from_dense(Vector::Zero(n), x1, x2);
    const auto fn = lin::psi_quadratic_functional(dm, params, qf);
    const Vector mu = x1 * a + x2 * params.beta;
    worst = std::max(worst, std::abs(gaussian_quadratic(fn, mu, params.sigma2) - qf.evaluate(a)));
    const Vector y = mu + oracle::random_vector(n, rng);
    worst_path = std::max(worst_path, std::abs(y.dot(fn.c * y) + fn.b.dot(y) + fn.d - lin::psi_quadratic(y, dm, params, qf)));
  }

  // Monte Carlo mean of psi on one design
  const int n = 40, m = 6, reps = 10000;
  const Matrix x1 = oracle::random_matrix(n, m, rng);
  const Matrix x2 = oracle::random_matrix(n, 1, rng);
  Matrix q = oracle::random_matrix(m, m, rng);
  q = ((q + q.transpose()) / 2).eval();
  const lin::QuadraticForm qf(q);
  const Vector a = oracle::random_vector(m, rng);
  const lin::LinearParams params{Vector::Constant(1, 0.7), 1.5};
  const DesignMatrices dm = DesignMatrices::from_dense(Vector::Zero(n), x1, x2);
  const Vector mu = x1 * a + x2 * params.beta;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const Vector y = mu + std::sqrt(params.sigma2) * oracle::random_vector(n, rng);
    const double v = lin::psi_quadratic(y, dm, params, qf);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
  const double z = std::abs(mean - qf.evaluate(a)) / se;
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(2, worst < 1e-9 && worst_path < 1e-9 && z < 3.0 && secs < 120.0, "quadratic-form exactness",
         "max |E psi - a'Qa| " + fmt(worst) + ", path mismatch " + fmt(worst_path) + ", MC |mean - a'Qa|/se " + fmt(z),
         start);
}

void criterion3() {
  const auto start = Clock::now();
  sim::SimConfig c;
  c.n_workers = 2000;
  c.n_firms = 100;
  c.mover_share = 0.05;
  c.sigma2 = 1.0;
  c.seed = 303;
  const int reps = 200;
  // both estimators from the same replications (same draws as mc_study)
  double s_corr = 0, s2_corr = 0, s_plug = 0, s2_plug = 0;
  int ok = 0;
  for (int r = 0; r < reps; ++r) {
    sim::SimConfig rep = c;
    rep.seed = c.seed + static_cast<std::uint64_t>(r);
    const sim::Simulation s = sim::simulate(rep);
    const NetworkData net = largest_component(s.net);
    const DesignMatrices dm = build_design(net, Normalization::DropLastFirmPerComponent);
    const double truth = sim::true_moments(net, s.truth.worker_effect, s.truth.firm_effect).var_firm;
    const EstimateResult est = lin::estimate_quadratic_form(dm.y, dm, lin::firm_variance_form(dm));
    const double e_corr = est.scalar() - truth;
    const double e_plug = est.diagnostics.at("plug_in") - truth;
    s_corr += e_corr;
    s2_corr += e_corr * e_corr;
    s_plug += e_plug;
    s2_plug += e_plug * e_plug;
    ++ok;
  }
  const double bias_corr = s_corr / ok, bias_plug = s_plug / ok;
  const double se_corr = std::sqrt((s2_corr / ok - bias_corr * bias_corr) / (ok - 1));
  const double se_plug = std::sqrt((s2_plug / ok - bias_plug * bias_plug) / (ok - 1));
  const double z_corr = std::abs(bias_corr) / se_corr, z_plug = std::abs(bias_plug) / se_plug;
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(3, z_plug > 10.0 && z_corr < 3.0 && secs < 300.0, "limited-mobility bias, 2000 workers, 5% movers",
         "plug-in bias " + fmt(bias_plug) + " (" + fmt(z_plug) + " se), corrected bias " + fmt(bias_corr) + " (" +
             fmt(z_corr) + " se)",
         start);
}

// Two-period network from (worker, firm) pairs per period. The covariate is
// constant within a job spell and distinct across spells.
NetworkData config_network(const std::vector<std::array<int, 2>>& spells) {
  const double attr[] = {0.3, 1.1, -0.7, 2.0, 0.5, -1.4};
  std::string csv = "worker_id,firm_id,period,y,x1\n";
  for (std::size_t w = 0; w < spells.size(); ++w) {
    for (int t = 0; t < 2; ++t) {
      const int f = spells[w][t];
      const bool second_spell = t == 1 && spells[w][1] != spells[w][0];
      csv += std::to_string(w) + "," + std::to_string(f) + "," + std::to_string(t) + ",0," +
             fmt(attr[2 * w + (second_spell ? 1 : 0)]) + "\n";
    }
  }
  std::istringstream in(csv);
  return load_edge_list(in);
}

void criterion4() {
  const auto start = Clock::now();
  struct Case {
    const char* name;
    std::vector<std::array<int, 2>> spells;
    bool informative;
  };
  const std::vector<Case> cases{
      {"A", {{0, 0}}, false},
      {"B", {{0, 1}}, false},
      {"C", {{0, 1}, {0, 1}}, true},
      {"D", {{0, 1}, {2, 3}}, false},
      {"E", {{0, 1}, {0, 2}}, false},
      {"F", {{0, 1}, {1, 2}, {2, 0}}, true},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const bool got = logit::has_informative_restrictions(build_design(config_network(c.spells)));
    ok = ok && got == c.informative;
    detail += std::string(c.name) + (got ? "=informative " : "=uninformative ");
  }
  detail.pop_back();
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(4, ok && secs < 1.0, "configuration dichotomy", detail, start);
}

void criterion5() {
  const auto start = Clock::now();
  std::mt19937_64 rng(505);
  double worst = 0.0;
  int checked = 0;
  auto check = [&](const logit::MomentFunction& phi, const DesignMatrices& dm, const Vector& theta) {
    for (int draw = 0; draw < 50; ++draw) {
      const Vector a = 1.5 * oracle::random_vector(dm.m(), rng);
      worst = std::max(worst, std::abs(logit::brute_force_expectation(phi, dm, a, theta)));
      worst = std::max(worst, std::abs(oracle::enumerate_expectation([&](std::uint64_t y) { return phi(y); },
                                                                     dm.dense_x1(), dm.x2, a, theta)));
    }
    ++checked;
  };
  const Vector theta = Vector::Constant(1, 0.9);
  const Matrix x2 = oracle::random_matrix(2, 1, rng), x4 = oracle::random_matrix(4, 1, rng),
               x6t = oracle::random_matrix(6, 1, rng), x6f = oracle::random_matrix(6, 1, rng);
  const std::vector<DesignMatrices> designs{logit::panel_design(x2), logit::tetrad_design(x6t),
                                            logit::config_c_design(x4), logit::config_f_design(x6f)};
  for (const auto& dm : designs) {
    for (const auto& phi : logit::discover_moments(dm, theta)) check(phi, dm, theta);
  }
  check(logit::conditional_logit_moment(x2, theta), designs[0], theta);
  for (auto kind : {logit::TetradCase::Kind::AllOnes, logit::TetradCase::Kind::AllTwos}) {
    for (int comp = 0; comp < 2; ++comp) check(logit::tetrad_moment(x6t, theta, {kind, {0, 1}, comp}), designs[1], theta);
  }
  for (int p = 0; p < 4; ++p) {
    for (int q = p + 1; q < 4; ++q) {
      check(logit::tetrad_moment(x6t, theta, {logit::TetradCase::Kind::TwoTwoOneOne, {p, q}, 0}), designs[1], theta);
    }
  }
  check(logit::config_c_moment(x4, theta), designs[2], theta);
  check(logit::config_f_moment(x6f, theta), designs[3], theta);
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(5, worst < 1e-10 && secs < 30.0, "logit moment validity",
         std::to_string(checked) + " moment functions, max |E phi| " + fmt(worst), start);
}

void criterion6() {
  const auto start = Clock::now();
  std::mt19937_64 rng(606);
  double worst = 0.0;
  bool shape = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = oracle::random_matrix(2, 2, rng);
    const Vector theta = oracle::random_vector(2, rng);
    const auto moments = logit::discover_moments(logit::panel_design(x), theta);
    shape = shape && moments.size() == 1;
    if (moments.empty()) continue;
    const auto& phi = moments[0];
    // (exp(x2 theta), -exp(x1 theta)) on the outcomes (1,0), (0,1)
    const double e10 = std::exp(x.row(1).dot(theta)), e01 = -std::exp(x.row(0).dot(theta));
    const double scale = phi(0b10) / e10;
    worst = std::max(worst, std::abs(phi(0b01) - scale * e01) / std::abs(phi(0b01)));
  }
  report(6, shape && worst < 1e-10, "conditional-logit recovery", "max relative deviation " + fmt(worst), start);
}

void criterion7() {
  const auto start = Clock::now();
  const Vector theta0 = Vector::Constant(1, 1.0);
  const auto blocks = sim::simulate_blocks(sim::BlockKind::ConfigC, 5000, theta0, 707);
  logit::GmmOptions opt;
  opt.bootstrap_reps = 100;
  opt.seed = 707;
  const EstimateResult r = logit::estimate_theta_gmm(blocks, opt);
  const double se = r.diagnostics.at("bootstrap_se");
  const double z = std::abs(r.scalar() - 1.0) / se;

  // population criterion at theta0: enumeration over independent heterogeneity draws
  std::mt19937_64 rng(708);
  double pop = 0.0;
  for (int b = 0; b < 200; ++b) {
    const Matrix x = oracle::random_matrix(4, 1, rng);
    const auto phi = logit::config_c_moment(x, theta0);
    pop += oracle::enumerate_expectation([&](std::uint64_t y) { return phi(y); }, logit::config_c_design(x).dense_x1(),
                                         x, oracle::random_vector(4, rng), theta0);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(7, z < 3.0 && std::abs(pop) < 1e-10 && secs < 120.0, "GMM on 5000 configuration C blocks",
         "theta_hat " + fmt(r.scalar()) + ", bootstrap se " + fmt(se) + ", |error|/se " + fmt(z) +
             ", population moment " + fmt(pop),
         start);
}

void criterion8() {
  const auto start = Clock::now();
  const double theta = 1.0;
  ape::GridSpec spec;
  spec.lower = -5.0;
  spec.upper = 5.0;
  spec.points = 101;
  const ape::TargetEffect target{ape::TargetKind::MoversAPE, theta};
  const DesignMatrices dm = ape::target_design(target.kind);
  const auto grid = ape::make_grid(target.kind, spec);
  auto bits = [](std::uint64_t y, int i) { return oracle::bit(y, i, 2); };
  const double dev_exp = ape::verify_psi(
      [&](std::uint64_t y) { return ape::psi_movers_exp(bits(y, 0), bits(y, 1), 0, 1, theta); }, target, dm, grid);
  const double dev_simple = ape::verify_psi(
      [&](std::uint64_t y) { return ape::psi_movers_simple(bits(y, 0), bits(y, 1), 0, 1); }, target, dm, grid);

  // mover pairs: a ~ N(0,1), x = (0,1) or (1,0), P(y_t = 1) = Lambda(a + theta x_t)
  std::mt19937_64 rng(808);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<ape::PanelPair> pairs;
  for (int r = 0; r < 10000; ++r) {
    ape::PanelPair p;
    const double a = normal(rng);
    const int first = unif(rng) < 0.5 ? 0 : 1;
    p.x = {first, 1 - first};
    for (int t = 0; t < 2; ++t) p.y[t] = unif(rng) < oracle::logistic(a + theta * p.x[t]) ? 1 : 0;
    pairs.push_back(p);
  }
  const EstimateResult est = ape::estimate_ape_movers(pairs, theta);
  // population APE: integral of Lambda(a + theta) - Lambda(a) against the N(0,1) density, Simpson's rule on [-10, 10]
  const int steps = 20000;
  const double h = 20.0 / steps;
  double pop = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double a = -10.0 + i * h;
    const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    pop += w * (oracle::logistic(a + theta) - oracle::logistic(a)) * std::exp(-0.5 * a * a);
  }
  pop *= h / 3.0 / std::sqrt(2.0 * M_PI);
  const double z = std::abs(est.scalar() - pop) / est.diagnostics.at("mc_se");
  report(8, dev_exp < 1e-12 && dev_simple < 1e-12 && z < 3.0, "movers APE",
         "verify_psi " + fmt(dev_exp) + " / " + fmt(dev_simple) + ", estimate " + fmt(est.scalar()) + " vs " + fmt(pop) +
             " (" + fmt(z) + " se)",
         start);
}

void criterion9() {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  ape::GridSpec panel;
  ape::GridSpec cgrid;
  cgrid.points = 9;
  for (double t : {0.5, 1.0, 2.0}) {
    const auto s = ape::certify_impossibility({ape::TargetKind::StayersAPE, t}, panel);
    const auto c = ape::certify_impossibility({ape::TargetKind::ConfigC_APE, t}, cgrid);
    const auto m = ape::certify_impossibility({ape::TargetKind::MoversAPE, t}, panel);
    ok = ok && s.residual > 1e-3 && c.residual > 1e-3 && m.residual < 1e-10;
    detail += "theta " + fmt(t) + ": stayers " + fmt(s.residual) + ", C " + fmt(c.residual) + ", movers " +
              fmt(m.residual) + "; ";
  }
  detail.resize(detail.size() - 2);
  report(9, ok, "impossibility certificates", detail, start);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// stdout plus the contents of the named output file
std::string run_cli(const std::vector<std::string>& args, const std::string& out_path) {
  std::remove(out_path.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli::run(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return std::to_string(code) + "\n" + out.str() + slurp(out_path);
}

void criterion10() {
  const auto start = Clock::now();
  const std::string dir = std::string(FDNET_TEST_TMP) + "/acceptance_";
  const std::string lin_cfg = dir + "linear.cfg", logit_cfg = dir + "logit.cfg", mc_cfg = dir + "mc.cfg";
  std::ofstream(lin_cfg) << "n_workers = 300\nn_firms = 15\nmover_share = 0.3\nsigma2 = 1\nseed = 11\n";
  std::ofstream(logit_cfg) << "n_workers = 400\nn_firms = 6\nmover_share = 0.8\nmodel = logit\ntheta = 1\nseed = 12\n";
  std::ofstream(mc_cfg) << "n_workers = 100\nn_firms = 8\nmover_share = 0.4\nseed = 13\n";
  const std::string lin_csv = dir + "linear.csv", logit_csv = dir + "logit.csv", small_csv = dir + "small.csv";
  std::ofstream(small_csv) << "worker_id,firm_id,period,y,x1\n1,1,1,0,0.2\n1,2,2,1,-0.5\n2,1,1,1,1.0\n2,2,2,0,0.7\n";
  const std::string out = dir + "out";

  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"simulate", {"simulate", "--config", lin_cfg, "--output", lin_csv, "--seed", "5"}},
      {"simulate-logit", {"simulate", "--config", logit_cfg, "--output", logit_csv}},
      {"estimate-linear", {"estimate-linear", "--input", lin_csv, "--output", out}},
      {"decompose", {"decompose", "--input", lin_csv, "--output", out}},
      {"estimate-logit", {"estimate-logit", "--input", logit_csv, "--pattern", "C", "--reps", "20", "--seed", "3", "--output", out}},
      {"discover", {"discover", "--input", small_csv, "--theta", "0.5", "--output", out}},
      {"verify", {"verify", "--input", small_csv, "--theta", "0.5", "--seed", "4", "--output", out}},
      {"verify-linear", {"verify", "--input", small_csv, "--model", "linear", "--theta", "1", "--seed", "4", "--output", out}},
      {"ape", {"ape", "--input", logit_csv, "--seed", "2", "--output", out}},
      {"certify-impossible", {"certify-impossible", "--target", "configc", "--theta", "1", "--output", out}},
      {"mc", {"mc", "--config", mc_cfg, "--reps", "4", "--estimator", "var_firm", "--seed", "9", "--output", out}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, args] : commands) {
    const bool writes_csv = args[0] == "simulate";
    const std::string target = writes_csv ? args[4] : out;
    const std::string first = run_cli(args, target);
    const std::string second = run_cli(args, target);
    const bool same = first == second && first.rfind("0\n", 0) == 0;
    ok = ok && same;
    if (!same) detail += name + " differs or failed (" + first.substr(0, first.find('\n')) + "); ";
  }
  if (detail.empty()) detail = std::to_string(commands.size()) + " invocations identical";
  report(10, ok, "CLI determinism", detail, start);
}

}  // namespace

int main() {
  const std::vector<void (*)()> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                         criterion6, criterion7, criterion8, criterion9, criterion10};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      std::printf("FAIL %zu: threw %s\n", i + 1, e.what());
      ++failures;
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
