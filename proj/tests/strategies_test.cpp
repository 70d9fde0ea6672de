#include <gtest/gtest.h>

#include <random>

#include "gis/models.hpp"
#include "gis/strategies.hpp"
#include "support/oracles.hpp"

namespace gis {
namespace {

using testing::quadrature_expectation;
using testing::quadrature_term_scale;
using testing::relative_error;

const StateSpaceModel& vdp() {
  static const StateSpaceModel model = vdp_model(100, 1.85 * M_PI / 2, 0.01,
                                                 Matrix::Identity(3, 3) * 1e-3,
                                                 Matrix::Identity(2, 2) * 0.1);
  return model;
}

// Weighted sample moments of a sigma-point set.
std::pair<Vector, Matrix> weighted_moments(const SigmaPointSet& set) {
  Vector mean = Vector::Zero(set.points.front().size());
  for (std::size_t i = 0; i < set.points.size(); ++i) mean += set.mean_weights[i] * set.points[i];
  Matrix cov = Matrix::Zero(mean.size(), mean.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const Vector d = set.points[i] - mean;
    cov += set.covariance_weights[i] * d * d.transpose();
  }
  return {mean, cov};
}

double weight_sum(const std::vector<double>& w) {
  double s = 0;
  for (double x : w) s += x;
  return s;
}

TEST(GiPredict, LinearMapIsExact) {
  std::mt19937_64 rng(1);
  const Matrix f = testing::random_stable_matrix(rng, 3);
  const Matrix p = testing::random_spd(rng, 3, 0.1, 2);
  const Matrix q = testing::random_spd(rng, 3, 0.01, 0.1);
  const Vector mu = testing::random_vector(rng, 3, -1, 1);
  const auto out = gi_predict(PolynomialMap::linear(f), q, GaussianBelief(mu, p));
  EXPECT_LE(max_abs(out.mean - f * mu), 1e-14);
  EXPECT_LE(max_abs(out.covariance - (f * p * f.transpose() + q)), 1e-12);
  EXPECT_LE(max_abs(out.cross - p * f.transpose()), 1e-12);
}

TEST(GiPredict, IdentityReproducesBelief) {
  std::mt19937_64 rng(2);
  const Matrix p = testing::random_spd(rng, 3, 0.1, 2);
  const Vector mu = testing::random_vector(rng, 3, -1, 1);
  const auto out = gi_predict(PolynomialMap::identity(3), Matrix::Zero(3, 3), GaussianBelief(mu, p));
  EXPECT_LE(max_abs(out.mean - mu), 1e-14);
  EXPECT_LE(max_abs(out.covariance - p), 1e-13);
  EXPECT_LE(max_abs(out.cross - p), 1e-13);
}

TEST(GiPredict, VdpMatchesQuadrature) {
  const GaussianBelief b(Vector{{2.75, 0.0, 2.0}}, Matrix::Identity(3, 3) * 0.1);
  const PolynomialMap f = vdp().dynamics_at(1);
  const Matrix q = vdp().process_noise();
  const auto out = gi_predict(f, q, b);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Polynomial& fi = f[static_cast<std::size_t>(i)];
    const double mean_q = quadrature_expectation(fi, b.mean(), b.covariance());
    EXPECT_LE(relative_error(out.mean(i), mean_q, quadrature_term_scale(fi, b.mean(), b.covariance())),
              1e-8);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const Polynomial& fj = f[static_cast<std::size_t>(j)];
      // Central moments by quadrature, formed directly from centred integrands.
      const double cov_q = quadrature_expectation(
          [&](const Vector& x) { return (fi.evaluate(x) - mean_q) *
                                        (fj.evaluate(x) - out.mean(j)); },
          b.mean(), b.covariance());
      EXPECT_NEAR(out.covariance(i, j), cov_q + q(i, j), 1e-8 * (1 + std::abs(cov_q)));
      const double cross_q = quadrature_expectation(
          [&](const Vector& x) { return (x(i) - b.mean()(i)) * (fj.evaluate(x) - out.mean(j)); },
          b.mean(), b.covariance());
      EXPECT_NEAR(out.cross(i, j), cross_q, 1e-8 * (1 + std::abs(cross_q)));
    }
  }
}

TEST(GiMeasurement, CoordinateSelectorAndConstant) {
  std::mt19937_64 rng(3);
  const Matrix p = testing::random_spd(rng, 3, 0.1, 2);
  const Vector mu = testing::random_vector(rng, 3, -1, 1);
  const Matrix r = Matrix::Identity(2, 2) * 0.1;
  const auto out = gi_measurement(vdp().measurement(), r, GaussianBelief(mu, p));
  EXPECT_LE(max_abs(out.predicted_measurement - mu.head(2)), 1e-14);
  EXPECT_LE(max_abs(out.innovation_covariance - (p.topLeftCorner(2, 2) + r)), 1e-13);
  EXPECT_LE(max_abs(out.cross_covariance - p.leftCols(2)), 1e-13);

  const PolynomialMap constant(3, {Polynomial::constant(3, 1.0), Polynomial::constant(3, -2.0)});
  const auto c = gi_measurement(constant, r, GaussianBelief(mu, p));
  EXPECT_LE(max_abs(c.innovation_covariance - r), 1e-15);
  EXPECT_LE(max_abs(c.cross_covariance), 1e-15);
}

TEST(GiMeasurement, QuadraticMatchesQuadrature) {
  std::mt19937_64 rng(4);
  const PolynomialMap h(3, {parse_polynomial("x1^2 + 0.5*x2*x3", 3), parse_polynomial("x3^2 - x1", 3)});
  const Matrix r = Matrix::Identity(2, 2) * 0.05;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix p = testing::random_spd(rng, 3, 0.05, 2);
    const Vector mu = testing::random_vector(rng, 3, -2, 2);
    const auto out = gi_measurement(h, r, GaussianBelief(mu, p));
    for (Eigen::Index i = 0; i < 2; ++i) {
      const Polynomial& hi = h[static_cast<std::size_t>(i)];
      EXPECT_NEAR(out.predicted_measurement(i), quadrature_expectation(hi, mu, p), 1e-10);
      for (Eigen::Index j = 0; j < 2; ++j) {
        const Polynomial& hj = h[static_cast<std::size_t>(j)];
        const double cov_q = quadrature_expectation(
            [&](const Vector& x) {
              return (hi.evaluate(x) - out.predicted_measurement(i)) *
                     (hj.evaluate(x) - out.predicted_measurement(j));
            },
            mu, p);
        EXPECT_NEAR(out.innovation_covariance(i, j), cov_q + r(i, j), 1e-8 * (1 + std::abs(cov_q)));
      }
    }
  }
}

TEST(SigmaPoints, CubatureUnitCases) {
  const auto s1 = sigma_points_cubature(GaussianBelief(Vector::Zero(1), Matrix::Identity(1, 1)));
  ASSERT_EQ(s1.points.size(), 2u);
  EXPECT_DOUBLE_EQ(s1.points[0](0), 1.0);
  EXPECT_DOUBLE_EQ(s1.points[1](0), -1.0);
  EXPECT_EQ(s1.mean_weights, (std::vector<double>{0.5, 0.5}));

  // Distinct eigenvalues fix the axis order: diag(4, 1) gives +-sqrt(2)*(2, 0) then +-sqrt(2)*(0, 1).
  Matrix p(2, 2);
  p << 4, 0, 0, 1;
  const auto s2 = sigma_points_cubature(GaussianBelief(Vector::Zero(2), p));
  ASSERT_EQ(s2.points.size(), 4u);
  const double r2 = std::sqrt(2.0);
  const Vector expected[] = {Vector{{2 * r2, 0}}, Vector{{-2 * r2, 0}}, Vector{{0, r2}}, Vector{{0, -r2}}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE((s2.points[i] - expected[i]).cwiseAbs().maxCoeff(), 1e-15) << i;
    EXPECT_EQ(s2.mean_weights[i], 0.25);
  }
}

TEST(SigmaPoints, UnscentedWeightsForKappaMinusOne) {
  const auto s = sigma_points_unscented(GaussianBelief(Vector::Zero(3), Matrix::Identity(3, 3)), -1.0);
  ASSERT_EQ(s.points.size(), 7u);
  EXPECT_EQ(s.mean_weights[0], -0.5);
  for (std::size_t i = 1; i < 7; ++i) EXPECT_EQ(s.mean_weights[i], 0.25);
  EXPECT_EQ(weight_sum(s.mean_weights), 1.0);
  EXPECT_THROW(sigma_points_unscented(GaussianBelief(Vector::Zero(3), Matrix::Identity(3, 3)), -3.0),
               InvalidParameter);
}

TEST(SigmaPoints, KappaZeroDegeneratesToCubature) {
  std::mt19937_64 rng(5);
  const GaussianBelief b(testing::random_vector(rng, 3, -1, 1), testing::random_spd(rng, 3, 0.1, 2));
  const auto u = sigma_points_unscented(b, 0.0);
  const auto c = sigma_points_cubature(b);
  EXPECT_EQ(u.mean_weights[0], 0.0);
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    EXPECT_EQ(u.points[i + 1], c.points[i]);
    EXPECT_EQ(u.mean_weights[i + 1], c.mean_weights[i]);
  }
}

TEST(SigmaPoints, MomentMatching) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + trial % 4;
    const GaussianBelief b(testing::random_vector(rng, n, -3, 3), testing::random_spd(rng, n, 0.01, 5));
    for (const SigmaPointSet& set : {sigma_points_cubature(b), sigma_points_unscented(b, n > 1 ? -1.0 : 0.5),
                                     sigma_points_unscented(b, 2.0)}) {
      EXPECT_NEAR(weight_sum(set.mean_weights), 1.0, 1e-12);
      const auto [mean, cov] = weighted_moments(set);
      EXPECT_LE(max_abs(mean - b.mean()), 1e-12 * (1 + max_abs(b.mean())));
      EXPECT_LE(max_abs(cov - b.covariance()), 1e-12 * (1 + max_abs(b.covariance())));
    }
  }
}

TEST(SigmaPredict, LinearAgreesWithGiAndIdentityReproduces) {
  std::mt19937_64 rng(7);
  const Matrix f = testing::random_stable_matrix(rng, 3);
  const Matrix q = testing::random_spd(rng, 3, 0.01, 0.1);
  const GaussianBelief b(testing::random_vector(rng, 3, -1, 1), testing::random_spd(rng, 3, 0.1, 2));
  const PolynomialMap lin = PolynomialMap::linear(f);
  const auto gi = gi_predict(lin, q, b);
  for (const SigmaPointSet& set : {sigma_points_cubature(b), sigma_points_unscented(b, -1.0)}) {
    const auto sp = sigma_predict(set, lin, q);
    EXPECT_LE(max_abs(sp.mean - gi.mean), 1e-10);
    EXPECT_LE(max_abs(sp.covariance - gi.covariance), 1e-10);
    EXPECT_LE(max_abs(sp.cross - gi.cross), 1e-10);
    const auto id = sigma_predict(set, PolynomialMap::identity(3), Matrix::Zero(3, 3));
    EXPECT_LE(max_abs(id.mean - b.mean()), 1e-12);
    EXPECT_LE(max_abs(id.covariance - b.covariance()), 1e-12);
  }
  const auto meas = sigma_measurement(sigma_points_cubature(b), vdp().measurement(), Matrix::Identity(2, 2));
  EXPECT_LE(max_abs(meas.cross_covariance - b.covariance().leftCols(2)), 1e-12);
  EXPECT_THROW(sigma_predict(sigma_points_cubature(b), lin, Matrix::Zero(2, 2)), DimensionError);
}

TEST(SigmaPredict, VdpDiffersFromExactGi) {
  const GaussianBelief b(Vector{{2.75, 0.0, 2.0}}, Matrix::Identity(3, 3) * 0.1);
  const PolynomialMap f = vdp().dynamics_at(1);
  const auto gi = gi_predict(f, vdp().process_noise(), b);
  const auto ckf = sigma_predict(sigma_points_cubature(b), f, vdp().process_noise());
  EXPECT_GT((gi.mean - ckf.mean).norm() + (gi.covariance - ckf.covariance).norm(), 1e-8);
}

TEST(Linearized, LinearMapIsExact) {
  std::mt19937_64 rng(8);
  const Matrix f = testing::random_stable_matrix(rng, 3);
  const Matrix q = testing::random_spd(rng, 3, 0.01, 0.1);
  const GaussianBelief b(testing::random_vector(rng, 3, -1, 1), testing::random_spd(rng, 3, 0.1, 2));
  const auto gi = gi_predict(PolynomialMap::linear(f), q, b);
  const auto ekf = linearized_predict(PolynomialMap::linear(f), q, b);
  EXPECT_LE(max_abs(ekf.mean - gi.mean), 1e-12);
  EXPECT_LE(max_abs(ekf.covariance - gi.covariance), 1e-12);
  EXPECT_LE(max_abs(ekf.cross - gi.cross), 1e-12);
}

TEST(Linearized, FirstOrderBiasOnSquare) {
  const double s2 = 0.3;
  const PolynomialMap sq(1, {parse_polynomial("x1^2", 1)});
  const GaussianBelief b(Vector::Zero(1), Matrix::Constant(1, 1, s2));
  EXPECT_EQ(linearized_predict(sq, Matrix::Zero(1, 1), b).mean(0), 0.0);
  EXPECT_NEAR(gi_predict(sq, Matrix::Zero(1, 1), b).mean(0), s2, 1e-15);
}

TEST(Linearized, JacobianMatchesFiniteDifferences) {
  const PolynomialMap f = vdp().dynamics_at(3);
  std::mt19937_64 rng(9);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = testing::random_vector(rng, 3, -3, 3);
    const Matrix j = f.jacobian(x);
    for (Eigen::Index c = 0; c < 3; ++c) {
      Vector hi = x, lo = x;
      hi(c) += h;
      lo(c) -= h;
      const Vector fd = (f.evaluate(hi) - f.evaluate(lo)) / (2 * h);
      for (Eigen::Index r = 0; r < 3; ++r) {
        EXPECT_LE(std::abs(fd(r) - j(r, c)), 1e-6 * std::max(1.0, std::abs(j(r, c))));
      }
    }
  }
}

TEST(Strategies, AffineMapsAgreeAcrossAllFour) {
  std::mt19937_64 rng(10);
  Matrix fm(3, 3);
  for (Eigen::Index i = 0; i < fm.size(); ++i) fm(i) = std::normal_distribution<double>()(rng);
  const PolynomialMap f = PolynomialMap::affine(fm, testing::random_vector(rng, 3, -1, 1));
  const Matrix q = testing::random_spd(rng, 3, 0.01, 0.1);
  const GaussianBelief b(testing::random_vector(rng, 3, -1, 1), testing::random_spd(rng, 3, 0.1, 2));
  const auto reference = gi_predict(f, q, b);
  for (auto name : kStrategyNames) {
    const AnyStrategy s = make_strategy(name);
    const auto out = std::visit([&](const auto& st) { return predict(st, f, q, b); }, s);
    EXPECT_LE(max_abs(out.mean - reference.mean), 1e-10) << name;
    EXPECT_LE(max_abs(out.covariance - reference.covariance), 1e-10) << name;
    EXPECT_LE(max_abs(out.cross - reference.cross), 1e-10) << name;
  }
}

TEST(Strategies, CovariancesArePsdOnVdp) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianBelief b(testing::random_vector(rng, 3, -3, 3), testing::random_spd(rng, 3, 0.01, 5));
    const PolynomialMap f = vdp().dynamics_at(1 + trial);
    for (auto name : kStrategyNames) {
      const AnyStrategy s = make_strategy(name);
      const auto out = std::visit([&](const auto& st) { return predict(st, f, vdp().process_noise(), b); }, s);
      EXPECT_EQ(out.covariance, out.covariance.transpose());
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(out.covariance).eigenvalues().minCoeff(),
                -tol::kPsd);
      const auto m = std::visit(
          [&](const auto& st) { return measure(st, vdp().measurement(), vdp().measurement_noise(), b); }, s);
      EXPECT_EQ(m.innovation_covariance, m.innovation_covariance.transpose());
    }
  }
}

TEST(Strategies, NameDispatch) {
  for (auto name : kStrategyNames) EXPECT_EQ(strategy_name(make_strategy(name)), name);
  EXPECT_THROW(make_strategy("pf"), InvalidParameter);
  EXPECT_EQ(std::get<UnscentedStrategy>(make_strategy("ukf", 0.5)).kappa, 0.5);
}

}  // namespace
}  // namespace gis
