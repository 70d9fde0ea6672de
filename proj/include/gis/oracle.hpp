#pragma once

// Reference expectations by tensor Gauss-Hermite quadrature, plus the random
// problem generators used to compare them with the exact integrator.
// Quadrature maps standard-normal nodes through a Cholesky factor, so it
// shares no code path with the spectral/multinomial integrator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "gis/core.hpp"
#include "gis/gaussian_integral.hpp"
#include "gis/polynomial.hpp"

namespace gis::oracle {

struct Rule1d {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

/// Golub-Welsch on the probabilists' Hermite recurrence.
inline Rule1d gauss_hermite(int count) {
  Matrix jacobi = Matrix::Zero(count, count);
  for (int k = 1; k < count; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
  Rule1d rule;
  for (int k = 0; k < count; ++k) {
    rule.nodes.push_back(solver.eigenvalues()(k));
    const double v = solver.eigenvectors()(0, k);
    rule.weights.push_back(v * v);
  }
  return rule;
}

/// E[g(x)], x ~ N(mean, cov), on a tensor grid of `nodes` points per dimension.
template <class Fn>
double quadrature_expectation(Fn&& g, const Vector& mean, const Matrix& cov, int nodes = 12) {
  const Rule1d rule = gauss_hermite(nodes);
  const auto n = mean.size();
  const Matrix chol = Eigen::LLT<Matrix>(cov).matrixL();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  double sum = 0.0;
  Vector xi(n);
  while (true) {
    double w = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto at = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
      xi(i) = rule.nodes[at];
      w *= rule.weights[at];
    }
    sum += w * g(Vector(mean + chol * xi));
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] == nodes) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return sum;
}

inline double quadrature_expectation(const Polynomial& p, const Vector& mean, const Matrix& cov,
                                     int nodes = 12) {
  return quadrature_expectation([&](const Vector& x) { return p.evaluate(x); }, mean, cov, nodes);
}

/// sum_p |alpha_p| E[prod |x_i|^m_i]: the size of the terms, used as the
/// floor of a relative comparison when the expectation itself cancels to ~0.
inline double quadrature_term_scale(const Polynomial& p, const Vector& mean, const Matrix& cov,
                                    int nodes = 12) {
  double scale = 0.0;
  for (const auto& [e, c] : p.terms()) {
    scale += std::abs(c) * quadrature_expectation(
                               [&](const Vector& x) {
                                 double v = 1.0;
                                 for (std::size_t i = 0; i < e.size(); ++i) {
                                   v *= std::pow(std::abs(x(static_cast<Eigen::Index>(i))),
                                                 static_cast<double>(e[i]));
                                 }
                                 return v;
                               },
                               mean, cov, nodes);
  }
  return scale;
}

inline double relative_error(double value, double reference, double scale) {
  return std::abs(value - reference) / std::max(std::abs(reference), scale);
}

/// Random orthogonal matrix times a log-uniform spectrum in [lo, hi].
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(std::log(lo), std::log(hi));
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector spectrum(n);
  for (Eigen::Index i = 0; i < n; ++i) spectrum(i) = std::exp(unif(rng));
  const Matrix p = q * spectrum.asDiagonal() * q.transpose();
  return 0.5 * (p + p.transpose());
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = unif(rng);
  return v;
}

/// Up to `terms` random monomials with total degree <= max_degree.
inline Polynomial random_polynomial(std::mt19937_64& rng, std::size_t n, std::uint32_t max_degree,
                                    int terms) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> deg(0, max_degree);
  std::uniform_int_distribution<std::size_t> var(0, n - 1);
  Polynomial p(n);
  for (int t = 0; t < terms; ++t) {
    Exponents e(n, 0);
    const std::uint32_t d = deg(rng);
    for (std::uint32_t k = 0; k < d; ++k) ++e[var(rng)];
    p.add_term(e, coef(rng));
  }
  return p;
}

struct OracleOptions {
  std::size_t min_dim = 1;
  std::size_t max_dim = 3;
  std::uint32_t max_degree = 6;
  int cases = 200;
  std::uint64_t seed = 1;
  double max_condition = 1e4;
  int nodes = 12;
};

struct OracleSummary {
  int cases = 0;
  double max_relative_error = 0.0;
};

/// Random polynomials against random beliefs; the covariance spectrum spans
/// at most max_condition.
inline OracleSummary run_oracle(const OracleOptions& opt) {
  if (opt.min_dim < 1 || opt.max_dim < opt.min_dim) {
    throw InvalidParameter("run_oracle: bad dimension range");
  }
  if (opt.cases < 1) throw InvalidParameter("run_oracle: need at least one case");
  if (!(opt.max_condition >= 1.0)) throw InvalidParameter("run_oracle: condition bound below 1");
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> dims(opt.min_dim, opt.max_dim);
  const double lo = 1.0 / std::sqrt(opt.max_condition);
  const double hi = std::sqrt(opt.max_condition);
  OracleSummary out;
  for (int c = 0; c < opt.cases; ++c) {
    const std::size_t n = dims(rng);
    const auto ni = static_cast<Eigen::Index>(n);
    const Polynomial p = random_polynomial(rng, n, opt.max_degree, 6);
    const Vector mean = random_vector(rng, ni, -1.5, 1.5);
    const Matrix cov = random_spd(rng, ni, lo * 0.1, hi * 0.1);
    const double exact = polynomial_expectation(p, GaussianBelief(mean, cov));
    const double reference = quadrature_expectation(p, mean, cov, opt.nodes);
    const double scale = quadrature_term_scale(p, mean, cov, opt.nodes);
    out.max_relative_error =
        std::max(out.max_relative_error, relative_error(exact, reference, scale));
    ++out.cases;
  }
  return out;
}

}  // namespace gis::oracle
