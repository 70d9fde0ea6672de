#pragma once

// Moment strategies: the rules a Gaussian filter uses to push a belief
// through a nonlinear map. Four are provided:
//
//   "gi"   exact Gaussian integration of the polynomial map
//   "ckf"  third-degree spherical-radial cubature (2n points)
//   "ukf"  unscented transform, kappa-only weights (2n+1 points)
//   "ekf"  first-order linearization at the mean
//
// Each strategy only has to implement transform(); prediction and
// measurement moments differ only in which noise covariance is added.

#include <concepts>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gis/core.hpp"
#include "gis/gaussian_integral.hpp"
#include "gis/polynomial.hpp"

namespace gis {

/// Moments of (x, f(x)) for x ~ belief, before any noise is added.
struct TransformedMoments {
  Vector mean;        // E[f(x)]
  Matrix covariance;  // Cov(f(x))
  Matrix cross;       // Cov(x, f(x)), n x m
};

struct PredictedMoments {
  Vector mean;
  Matrix covariance;  // includes process noise
  Matrix cross;       // Cov(x_{k-1}, x_k)
};

struct MeasurementMoments {
  Vector predicted_measurement;
  Matrix innovation_covariance;  // includes measurement noise
  Matrix cross_covariance;       // Cov(x_k, y_k)
};

struct SigmaPointSet {
  std::vector<Vector> points;
  std::vector<double> mean_weights;
  std::vector<double> covariance_weights;
};

template <class S>
concept MomentStrategy = requires(const S& s, const PolynomialMap& f, const GaussianBelief& b) {
  { s.transform(f, b) } -> std::same_as<TransformedMoments>;
  { s.name() } -> std::convertible_to<std::string_view>;
};

namespace detail {

inline void check_transform_inputs(const PolynomialMap& f, const GaussianBelief& belief,
                                   const char* who) {
  if (f.arity() != static_cast<std::size_t>(belief.dim())) {
    throw DimensionError(std::string(who) + ": map arity " + std::to_string(f.arity()) +
                         " does not match belief dimension " + std::to_string(belief.dim()));
  }
}

inline void check_noise(const Matrix& noise, std::size_t m, const char* who) {
  if (noise.rows() != static_cast<Eigen::Index>(m) || noise.cols() != static_cast<Eigen::Index>(m)) {
    throw DimensionError(std::string(who) + ": noise covariance is " +
                         std::to_string(noise.rows()) + "x" + std::to_string(noise.cols()) +
                         ", expected " + std::to_string(m) + "x" + std::to_string(m));
  }
}

}  // namespace detail

template <MomentStrategy S>
PredictedMoments predict(const S& strategy, const PolynomialMap& f, const Matrix& q,
                         const GaussianBelief& belief) {
  detail::check_noise(q, f.size(), "predict");
  TransformedMoments t = strategy.transform(f, belief);
  return {std::move(t.mean), symmetrize_and_project(t.covariance + q), std::move(t.cross)};
}

template <MomentStrategy S>
MeasurementMoments measure(const S& strategy, const PolynomialMap& h, const Matrix& r,
                           const GaussianBelief& belief) {
  detail::check_noise(r, h.size(), "measure");
  TransformedMoments t = strategy.transform(h, belief);
  return {std::move(t.mean), symmetrize_and_project(t.covariance + r), std::move(t.cross)};
}

// ---------------------------------------------------------------------------
// Exact Gaussian integration.

struct GiStrategy {
  static constexpr std::string_view name() { return "gi"; }

  TransformedMoments transform(const PolynomialMap& f, const GaussianBelief& belief) const {
    detail::check_transform_inputs(f, belief, "gi");
    GaussianIntegrator integrator(belief);
    Vector mean = integrator.map(f);
    Matrix covariance = integrator.second_moment(f) - mean * mean.transpose();
    Matrix cross = integrator.cross_moment(f) - belief.mean() * mean.transpose();
    return {std::move(mean), std::move(covariance), std::move(cross)};
  }
};

inline PredictedMoments gi_predict(const PolynomialMap& f, const Matrix& q,
                                   const GaussianBelief& belief) {
  return predict(GiStrategy{}, f, q, belief);
}

inline MeasurementMoments gi_measurement(const PolynomialMap& h, const Matrix& r,
                                         const GaussianBelief& belief) {
  return measure(GiStrategy{}, h, r, belief);
}

// ---------------------------------------------------------------------------
// Sigma-point rules. The matrix square root is basis * diag(sqrt(eig)).

inline SigmaPointSet sigma_points_cubature(const GaussianBelief& belief) {
  const Eigen::Index n = belief.dim();
  const Matrix root = spectral_decompose(belief.covariance()).sqrt_factor();
  const double scale = std::sqrt(static_cast<double>(n));
  const double w = 1.0 / (2.0 * static_cast<double>(n));
  SigmaPointSet set;
  for (Eigen::Index i = 0; i < n; ++i) {
    set.points.push_back(belief.mean() + scale * root.col(i));
    set.points.push_back(belief.mean() - scale * root.col(i));
  }
  set.mean_weights.assign(set.points.size(), w);
  set.covariance_weights = set.mean_weights;
  return set;
}

/// Classic kappa-parameterised unscented points: centre weight kappa/(n+kappa),
/// 2n points at mean +- sqrt(n+kappa) * root columns with weight 1/(2(n+kappa)).
inline SigmaPointSet sigma_points_unscented(const GaussianBelief& belief, double kappa) {
  const Eigen::Index n = belief.dim();
  const double spread = static_cast<double>(n) + kappa;
  if (!(spread > 0.0)) {
    throw InvalidParameter("sigma_points_unscented: n + kappa must be positive, got " +
                           std::to_string(spread));
  }
  const Matrix root = spectral_decompose(belief.covariance()).sqrt_factor();
  const double scale = std::sqrt(spread);
  SigmaPointSet set;
  set.points.push_back(belief.mean());
  set.mean_weights.push_back(kappa / spread);
  for (Eigen::Index i = 0; i < n; ++i) {
    set.points.push_back(belief.mean() + scale * root.col(i));
    set.points.push_back(belief.mean() - scale * root.col(i));
    set.mean_weights.push_back(0.5 / spread);
    set.mean_weights.push_back(0.5 / spread);
  }
  set.covariance_weights = set.mean_weights;
  return set;
}

/// Weighted sample moments of f over a sigma-point set.
inline TransformedMoments sigma_transform(const SigmaPointSet& set, const PolynomialMap& f) {
  if (set.points.empty() || set.points.size() != set.mean_weights.size() ||
      set.points.size() != set.covariance_weights.size()) {
    throw DimensionError("sigma_transform: inconsistent sigma-point set");
  }
  const Eigen::Index n = set.points.front().size();
  if (f.arity() != static_cast<std::size_t>(n)) {
    throw DimensionError("sigma_transform: map arity " + std::to_string(f.arity()) +
                         " does not match point dimension " + std::to_string(n));
  }
  const auto m = static_cast<Eigen::Index>(f.size());
  std::vector<Vector> images;
  images.reserve(set.points.size());
  Vector x_mean = Vector::Zero(n);
  Vector y_mean = Vector::Zero(m);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    images.push_back(f.evaluate(set.points[i]));
    x_mean += set.mean_weights[i] * set.points[i];
    y_mean += set.mean_weights[i] * images.back();
  }
  Matrix covariance = Matrix::Zero(m, m);
  Matrix cross = Matrix::Zero(n, m);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const Vector dy = images[i] - y_mean;
    covariance += set.covariance_weights[i] * dy * dy.transpose();
    cross += set.covariance_weights[i] * (set.points[i] - x_mean) * dy.transpose();
  }
  return {std::move(y_mean), std::move(covariance), std::move(cross)};
}

inline PredictedMoments sigma_predict(const SigmaPointSet& set, const PolynomialMap& f,
                                      const Matrix& q) {
  detail::check_noise(q, f.size(), "sigma_predict");
  TransformedMoments t = sigma_transform(set, f);
  return {std::move(t.mean), symmetrize_and_project(t.covariance + q), std::move(t.cross)};
}

inline MeasurementMoments sigma_measurement(const SigmaPointSet& set, const PolynomialMap& h,
                                            const Matrix& r) {
  detail::check_noise(r, h.size(), "sigma_measurement");
  TransformedMoments t = sigma_transform(set, h);
  return {std::move(t.mean), symmetrize_and_project(t.covariance + r), std::move(t.cross)};
}

struct CubatureStrategy {
  static constexpr std::string_view name() { return "ckf"; }

  TransformedMoments transform(const PolynomialMap& f, const GaussianBelief& belief) const {
    detail::check_transform_inputs(f, belief, "ckf");
    return sigma_transform(sigma_points_cubature(belief), f);
  }
};

struct UnscentedStrategy {
  double kappa = -1.0;

  static constexpr std::string_view name() { return "ukf"; }

  TransformedMoments transform(const PolynomialMap& f, const GaussianBelief& belief) const {
    detail::check_transform_inputs(f, belief, "ukf");
    return sigma_transform(sigma_points_unscented(belief, kappa), f);
  }
};

// ---------------------------------------------------------------------------
// First-order linearization with the exact polynomial Jacobian.

struct LinearizedStrategy {
  static constexpr std::string_view name() { return "ekf"; }

  TransformedMoments transform(const PolynomialMap& f, const GaussianBelief& belief) const {
    detail::check_transform_inputs(f, belief, "ekf");
    const Matrix jac = f.jacobian(belief.mean());
    Matrix cross = belief.covariance() * jac.transpose();
    Matrix covariance = jac * cross;
    return {f.evaluate(belief.mean()), std::move(covariance), std::move(cross)};
  }
};

inline PredictedMoments linearized_predict(const PolynomialMap& f, const Matrix& q,
                                           const GaussianBelief& belief) {
  return predict(LinearizedStrategy{}, f, q, belief);
}

inline MeasurementMoments linearized_measurement(const PolynomialMap& h, const Matrix& r,
                                                 const GaussianBelief& belief) {
  return measure(LinearizedStrategy{}, h, r, belief);
}

// ---------------------------------------------------------------------------
// Runtime selection by name.

using AnyStrategy = std::variant<GiStrategy, CubatureStrategy, UnscentedStrategy, LinearizedStrategy>;

inline constexpr std::string_view kStrategyNames[] = {"gi", "ckf", "ukf", "ekf"};

inline bool is_strategy_name(std::string_view name) {
  for (auto n : kStrategyNames) {
    if (n == name) return true;
  }
  return false;
}

inline AnyStrategy make_strategy(std::string_view name, double ukf_kappa = -1.0) {
  if (name == "gi") return GiStrategy{};
  if (name == "ckf") return CubatureStrategy{};
  if (name == "ukf") return UnscentedStrategy{ukf_kappa};
  if (name == "ekf") return LinearizedStrategy{};
  throw InvalidParameter("unknown strategy \"" + std::string(name) +
                         "\" (expected one of gi, ckf, ukf, ekf)");
}

inline std::string_view strategy_name(const AnyStrategy& s) {
  return std::visit([](const auto& x) { return std::string_view(x.name()); }, s);
}

}  // namespace gis
