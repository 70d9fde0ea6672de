// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gis/experiment.hpp"
#include "gis/gaussian_integral.hpp"
#include "gis/oracle.hpp"
#include "gis/smoother.hpp"
#include "support/oracles.hpp"

namespace {

using namespace gis;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_vec(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i));
  return s + ")";
}

// ---------------------------------------------------------------------------

Outcome exact_moment_oracle() {
  Outcome out;
  oracle::OracleOptions opt;
  opt.min_dim = 1;
  opt.max_dim = 3;
  opt.max_degree = 6;
  opt.cases = 240;
  opt.max_condition = 1e4;
  opt.nodes = 12;
  opt.seed = 101;
  const auto quad = oracle::run_oracle(opt);

  std::mt19937_64 rng(202);
  double wick_worst = 0.0;
  const int wick_cases = 240;
  for (int c = 0; c < wick_cases; ++c) {
    const std::size_t n = 1 + static_cast<std::size_t>(c % 3);
    const auto ni = static_cast<Eigen::Index>(n);
    const Matrix p = oracle::random_spd(rng, ni, 1e-2, 1e2);
    Exponents e(n, 0);
    const auto degree = static_cast<std::uint32_t>(rng() % 7);
    for (std::uint32_t k = 0; k < degree; ++k) ++e[rng() % n];
    const double gi = monomial_expectation(e, GaussianBelief(Vector::Zero(ni), p));
    const double wick = testing::isserlis_monomial(e, p);
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      scale *= std::pow(std::sqrt(p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))),
                        static_cast<double>(e[i]));
    }
    wick_worst = std::max(wick_worst, oracle::relative_error(gi, wick, scale));
  }
  out.pass = quad.cases >= 200 && quad.max_relative_error <= 1e-8 && wick_worst <= 1e-10;
  out.detail = std::to_string(quad.cases) + " quadrature cases, max rel err " +
               fmt(quad.max_relative_error) + " (<= 1e-8); " + std::to_string(wick_cases) +
               " zero-mean Isserlis cases, max rel err " + fmt(wick_worst) + " (<= 1e-10)";
  return out;
}

// ---------------------------------------------------------------------------

Outcome linear_gaussian_equivalence() {
  std::mt19937_64 rng(303);
  const Matrix fm = testing::random_stable_matrix(rng, 3);
  Matrix h(2, 3);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = normal(rng);
  const Matrix q = oracle::random_spd(rng, 3, 0.01, 0.1);
  const Matrix r = oracle::random_spd(rng, 2, 0.05, 0.5);
  const Matrix p0 = oracle::random_spd(rng, 3, 0.5, 2.0);
  const Vector m0 = oracle::random_vector(rng, 3, -1, 1);
  const auto model = linear_model(fm, h, q, r);
  const auto ys = simulate(model, oracle::random_vector(rng, 3, -2, 2), 300, 404).measurements;
  const auto ref = testing::closed_form_kalman_rts(fm, h, q, r, ys, m0, p0);

  double gi_filter = 0, gi_smoother = 0, cross_strategy = 0;
  std::vector<SmoothingResult> results;
  for (auto name : kStrategyNames) {
    results.push_back(smooth(model, ys, GaussianBelief(m0, p0), make_strategy(name)));
  }
  const SmoothingResult& gi = results[0];
  for (std::size_t k = 0; k < ys.size(); ++k) {
    gi_filter = std::max({gi_filter, max_abs(gi.forward[k].filtered.mean() - ref.filtered_mean[k]),
                          max_abs(gi.forward[k].filtered.covariance() - ref.filtered_cov[k])});
    gi_smoother = std::max({gi_smoother, max_abs(gi.smoothed[k].mean() - ref.smoothed_mean[k]),
                            max_abs(gi.smoothed[k].covariance() - ref.smoothed_cov[k])});
    for (const auto& other : results) {
      cross_strategy = std::max(
          {cross_strategy, max_abs(other.forward[k].filtered.mean() - gi.forward[k].filtered.mean()),
           max_abs(other.forward[k].filtered.covariance() - gi.forward[k].filtered.covariance()),
           max_abs(other.smoothed[k].mean() - gi.smoothed[k].mean()),
           max_abs(other.smoothed[k].covariance() - gi.smoothed[k].covariance())});
    }
  }
  Outcome out;
  out.pass = gi_filter <= 1e-10 && gi_smoother <= 1e-10 && cross_strategy <= 1e-10;
  out.detail = "T=300, GI filter vs Kalman " + fmt(gi_filter) + ", GI smoother vs RTS " +
               fmt(gi_smoother) + ", max spread across gi/ckf/ukf/ekf " + fmt(cross_strategy) +
               " (all <= 1e-10)";
  return out;
}

// ---------------------------------------------------------------------------

const RmseReport& bundled_report() {
  static const RmseReport report = [] {
    const auto cfg = load_config(std::filesystem::path(GIS_SOURCE_DIR) / "configs" / "vdp.cfg");
    std::printf("  (running bundled config: %d runs x %d steps, %u workers)\n", cfg.runs, cfg.steps,
                worker_count());
    std::fflush(stdout);
    return run_experiment(cfg);
  }();
  return report;
}

const MethodReport& method(const RmseReport& report, const std::string& name) {
  for (const auto& mr : report.methods) {
    if (mr.method == name) return mr;
  }
  throw std::runtime_error("method " + name + " missing from report");
}

Outcome benchmark_reproduction() {
  const RmseReport& report = bundled_report();
  Outcome out;
  const Vector target{{0.009, 0.034, 0.009}};
  const auto& gi = method(report, "gi");
  const auto& ckf = method(report, "ckf");
  const auto& ukf = method(report, "ukf");
  const auto& ekf = method(report, "ekf");
  for (const auto* mr : {&gi, &ckf, &ukf, &ekf}) {
    if (!mr->present) {
      out.pass = false;
      out.detail = mr->method + " absent (all runs diverged)";
      return out;
    }
  }
  bool band = true;
  for (Eigen::Index i = 0; i < 3; ++i) {
    band = band && std::abs(gi.smoother_average(i) - target(i)) <= 0.5 * target(i);
  }
  auto ordered = [&](bool smoother, std::string& where) {
    bool ok = true;
    for (Eigen::Index i = 0; i < 3; ++i) {
      auto at = [&](const MethodReport& m) {
        return smoother ? m.smoother_average(i) : m.filter_average(i);
      };
      const bool state_ok = at(gi) < at(ckf) && at(ckf) <= at(ukf) && at(ukf) < at(ekf);
      if (!state_ok) where += " state" + std::to_string(i + 1);
      ok = ok && state_ok;
    }
    return ok;
  };
  std::string smoother_where, filter_where;
  const bool smoother_order = ordered(true, smoother_where);
  const bool filter_order = ordered(false, filter_where);
  out.pass = band && smoother_order && filter_order;
  out.detail = "GIRTSS avg RMSE " + fmt_vec(gi.smoother_average) + " vs target " + fmt_vec(target) +
               " +-50%: " + (band ? "in band" : "OUT OF BAND") +
               "; CRTSS " + fmt_vec(ckf.smoother_average) + ", URTSS " + fmt_vec(ukf.smoother_average) +
               ", ERTSS " + fmt_vec(ekf.smoother_average) + "; smoother ordering " +
               (smoother_order ? "holds" : "violated at" + smoother_where) +
               "; filter ordering (GIF " + fmt_vec(gi.filter_average) + ", CKF " +
               fmt_vec(ckf.filter_average) + ", UKF " + fmt_vec(ukf.filter_average) + ", EKF " +
               fmt_vec(ekf.filter_average) + ") " +
               (filter_order ? "holds" : "violated at" + filter_where);
  return out;
}

Outcome smoother_improves_filter() {
  const RmseReport& report = bundled_report();
  Outcome out;
  std::string problems;
  int min_runs = report.runs;
  for (const auto& mr : report.methods) {
    if (!mr.present) {
      problems += " " + mr.method + " absent;";
      continue;
    }
    min_runs = std::min(min_runs, mr.completed);
    for (Eigen::Index i = 0; i < mr.filter_average.size(); ++i) {
      if (!(mr.smoother_average(i) < mr.filter_average(i))) {
        problems += " " + mr.method + " state" + std::to_string(i + 1) + " not improved;";
      }
    }
    if (mr.filter_rmse.row(report.steps - 1) != mr.smoother_rmse.row(report.steps - 1)) {
      problems += " " + mr.method + " differs at step T;";
    }
  }
  out.pass = problems.empty() && min_runs >= 100;
  out.detail = std::to_string(min_runs) + " completed runs per method; " +
               (problems.empty() ? std::string("smoother below filter for every method and state, equal at step T")
                                 : "problems:" + problems);
  return out;
}

Outcome ret_ordering() {
  const RmseReport& report = bundled_report();
  Outcome out;
  const auto& gi = method(report, "gi");
  const auto& ekf = method(report, "ekf");
  bool ok = ekf.filter_ret == 1.0 && ekf.smoother_ret == 1.0;
  std::string detail = "RET filter/smoother:";
  for (const auto& mr : report.methods) {
    detail += " " + mr.method + " " + fmt(mr.filter_ret) + "/" + fmt(mr.smoother_ret);
    if (&mr != &gi) ok = ok && gi.filter_ret > mr.filter_ret && gi.smoother_ret > mr.smoother_ret;
    if (&mr != &ekf) ok = ok && ekf.filter_ret < mr.filter_ret && ekf.smoother_ret < mr.smoother_ret;
  }
  out.pass = ok;
  out.detail = detail + " (gi slowest, ekf fastest, ekf == 1)";
  return out;
}

// ---------------------------------------------------------------------------

Outcome property_suite() {
  std::mt19937_64 rng(505);
  std::vector<std::string> failures;

  for (int c = 0; c < 50; ++c) {
    const auto n = static_cast<Eigen::Index>(1 + c % 3);
    const GaussianBelief b(oracle::random_vector(rng, n, -2, 2), oracle::random_spd(rng, n, 1e-2, 10));
    if (polynomial_expectation(Polynomial::constant(static_cast<std::size_t>(n), 1.0), b) != 1.0) {
      failures.push_back("normalization");
      break;
    }
  }

  for (int c = 0; c < 50; ++c) {
    const std::size_t n = 1 + static_cast<std::size_t>(c % 3);
    const auto ni = static_cast<Eigen::Index>(n);
    Exponents e(n, 0);
    const auto degree = 1 + 2 * static_cast<std::uint32_t>(rng() % 3);
    for (std::uint32_t k = 0; k < degree; ++k) ++e[rng() % n];
    if (monomial_expectation(e, GaussianBelief(Vector::Zero(ni), oracle::random_spd(rng, ni, 0.1, 10))) != 0.0) {
      failures.push_back("odd-moment annihilation");
      break;
    }
  }

  for (int c = 0; c < 50; ++c) {
    Matrix a(2, 3);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = normal(rng);
    const Vector bvec = oracle::random_vector(rng, 2, -1, 1);
    const GaussianBelief b(oracle::random_vector(rng, 3, -2, 2), oracle::random_spd(rng, 3, 0.1, 3));
    const auto moments = GiStrategy{}.transform(PolynomialMap::affine(a, bvec), b);
    const Matrix expected_cov = a * b.covariance() * a.transpose();
    if (max_abs(moments.mean - (a * b.mean() + bvec)) > 1e-10 ||
        max_abs(moments.covariance - expected_cov) > 1e-10 * (1 + max_abs(expected_cov))) {
      failures.push_back("affine consistency");
      break;
    }
  }

  for (int c = 0; c < 30; ++c) {
    const Matrix p = oracle::random_spd(rng, 3, 0.05, 5);
    const Vector mu = oracle::random_vector(rng, 3, -1, 1);
    const Polynomial poly = oracle::random_polynomial(rng, 3, 6, 6);
    const SpectralDecomposition dec = spectral_decompose(p);
    SpectralDecomposition other{Matrix(3, 3), Vector(3)};
    for (Eigen::Index col = 0; col < 3; ++col) {
      other.basis.col(col) = (rng() % 2 ? 1.0 : -1.0) * dec.basis.col(2 - col);
      other.eigenvalues(col) = dec.eigenvalues(2 - col);
    }
    const double a = GaussianIntegrator(mu, dec).polynomial(poly);
    const double b = GaussianIntegrator(mu, other).polynomial(poly);
    if (oracle::relative_error(b, a, oracle::quadrature_term_scale(poly, mu, p)) > 1e-10) {
      failures.push_back("basis invariance");
      break;
    }
  }

  {
    const auto model = vdp_model(100, 1.85 * M_PI / 2, 0.01, Matrix::Identity(3, 3) * 1e-3,
                                 Matrix::Identity(2, 2) * 0.1);
    const auto traj = simulate(model, Vector{{2.75, 0, 2}}, 300, 606);
    Matrix p0 = Matrix::Zero(3, 3);
    p0.diagonal() << 10, 10, 0.5;
    const GaussianBelief init(Vector{{0, -3, 1}}, p0);
    auto valid = [](const Matrix& p) {
      return p == p.transpose() &&
             Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff() >= -tol::kPsd;
    };
    bool ok = true;
    for (auto name : kStrategyNames) {
      const auto res = smooth(model, traj.measurements, init, make_strategy(name));
      for (std::size_t k = 0; k < res.smoothed.size(); ++k) {
        ok = ok && valid(res.forward[k].predicted.covariance()) &&
             valid(res.forward[k].filtered.covariance()) && valid(res.smoothed[k].covariance());
      }
    }
    if (!ok) failures.push_back("PSD/symmetry of emitted covariances");
  }

  {
    auto cfg = load_config(std::filesystem::path(GIS_SOURCE_DIR) / "tests" / "data" / "small_vdp.cfg");
    const auto a = run_experiment(cfg, 1);
    const auto b = run_experiment(cfg, 2);
    bool same = true;
    for (std::size_t m = 0; m < a.methods.size(); ++m) {
      same = same && a.methods[m].filter_rmse == b.methods[m].filter_rmse &&
             a.methods[m].smoother_rmse == b.methods[m].smoother_rmse;
    }
    const auto t1 = simulate(build_model(cfg), cfg.x0, cfg.steps, 99);
    const auto t2 = simulate(build_model(cfg), cfg.x0, cfg.steps, 99);
    same = same && t1.states == t2.states && t1.measurements == t2.measurements;
    if (!same) failures.push_back("pipeline determinism");
  }

  Outcome out;
  out.pass = failures.empty();
  if (out.pass) {
    out.detail = "normalization, odd moments, affine consistency, basis invariance, PSD/symmetry, determinism";
  } else {
    out.detail = "failed:";
    for (const auto& f : failures) out.detail += " " + f + ";";
  }
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"exact-moment oracle", exact_moment_oracle},
      {"linear-Gaussian equivalence", linear_gaussian_equivalence},
      {"benchmark reproduction", benchmark_reproduction},
      {"smoother improves filter", smoother_improves_filter},
      {"RET ordering", ret_ordering},
      {"property suite", property_suite},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
