#pragma once

// State-space models x_k = f_k(x_{k-1}) + w, y_k = h(x_k) + v with polynomial
// f_k and h, and a deterministic simulator for them.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gis/core.hpp"
#include "gis/polynomial.hpp"

namespace gis {

/// Additive forcing amplitude * cos(angular_step * (k - 1)) on one dynamics
/// component. It enters the step-k map as a degree-0 term, evaluated at the
/// source step index k-1.
struct Forcing {
  std::size_t component = 0;
  double amplitude = 0.0;
  double angular_step = 0.0;
};

class StateSpaceModel {
 public:
  StateSpaceModel(PolynomialMap dynamics, PolynomialMap measurement, Matrix process_noise,
                  Matrix measurement_noise, std::vector<Forcing> forcing = {})
      : dynamics_(std::move(dynamics)),
        measurement_(std::move(measurement)),
        q_(std::move(process_noise)),
        r_(std::move(measurement_noise)),
        forcing_(std::move(forcing)) {
    const std::size_t n = dynamics_.arity();
    if (dynamics_.size() != n) {
      throw DimensionError("StateSpaceModel: dynamics has " + std::to_string(dynamics_.size()) +
                           " components but arity " + std::to_string(n));
    }
    if (measurement_.arity() != n) {
      throw DimensionError("StateSpaceModel: measurement map arity " +
                           std::to_string(measurement_.arity()) + ", state dimension " +
                           std::to_string(n));
    }
    if (measurement_.size() == 0) throw DimensionError("StateSpaceModel: empty measurement map");
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(measurement_.size());
    if (q_.rows() != ni || q_.cols() != ni) {
      throw DimensionError("StateSpaceModel: Q must be " + std::to_string(n) + "x" +
                           std::to_string(n));
    }
    if (r_.rows() != mi || r_.cols() != mi) {
      throw DimensionError("StateSpaceModel: R must be " + std::to_string(mi) + "x" +
                           std::to_string(mi));
    }
    q_sqrt_ = spectral_decompose(q_).sqrt_factor();
    r_sqrt_ = spectral_decompose(r_).sqrt_factor();
    for (const auto& fc : forcing_) {
      if (fc.component >= n) {
        throw DimensionError("StateSpaceModel: forcing on component " +
                             std::to_string(fc.component + 1) + " of " + std::to_string(n));
      }
    }
  }

  std::size_t state_dim() const { return dynamics_.arity(); }
  std::size_t measurement_dim() const { return measurement_.size(); }

  /// The map producing x_k from x_{k-1}, k >= 1.
  PolynomialMap dynamics_at(int k) const {
    if (k < 1) throw InvalidParameter("dynamics_at: step must be >= 1, got " + std::to_string(k));
    if (forcing_.empty()) return dynamics_;
    std::vector<Polynomial> components = dynamics_.components();
    const std::size_t n = state_dim();
    for (const auto& fc : forcing_) {
      const double value = fc.amplitude * std::cos(fc.angular_step * static_cast<double>(k - 1));
      components[fc.component].add_term(Exponents(n, 0), value);
    }
    return PolynomialMap(n, std::move(components));
  }

  const PolynomialMap& base_dynamics() const { return dynamics_; }
  const PolynomialMap& measurement() const { return measurement_; }
  const Matrix& process_noise() const { return q_; }
  const Matrix& measurement_noise() const { return r_; }
  const std::vector<Forcing>& forcing() const { return forcing_; }

  /// Square roots L with L L^T = Q (resp. R), for noise generation.
  const Matrix& process_noise_sqrt() const { return q_sqrt_; }
  const Matrix& measurement_noise_sqrt() const { return r_sqrt_; }

 private:
  PolynomialMap dynamics_;
  PolynomialMap measurement_;
  Matrix q_;
  Matrix r_;
  std::vector<Forcing> forcing_;
  Matrix q_sqrt_;
  Matrix r_sqrt_;
};

/**
 * Euler-discretised forced Van der Pol oscillator with state
 * (displacement, velocity, damping):
 *
 *   f1 = x1 + delta x2
 *   f2 = x2 + delta (x3 (1 - x1^2) x2 - x1 + A cos(lambda (k-1) delta))
 *   f3 = x3
 *   h  = (x1, x2)
 */
inline StateSpaceModel vdp_model(double amplitude, double frequency, double delta, Matrix q,
                                 Matrix r) {
  if (!(delta > 0.0)) {
    throw InvalidParameter("vdp_model: sampling interval must be positive, got " +
                           std::to_string(delta));
  }
  constexpr std::size_t n = 3;
  Polynomial f1(n, {{1.0, {1, 0, 0}}, {delta, {0, 1, 0}}});
  Polynomial f2(n, {{1.0, {0, 1, 0}},
                    {delta, {0, 1, 1}},
                    {-delta, {2, 1, 1}},
                    {-delta, {1, 0, 0}}});
  Polynomial f3 = Polynomial::variable(n, 2);
  PolynomialMap dynamics(n, {f1, f2, f3});
  PolynomialMap h(n, {Polynomial::variable(n, 0), Polynomial::variable(n, 1)});
  return StateSpaceModel(std::move(dynamics), std::move(h), std::move(q), std::move(r),
                         {Forcing{1, amplitude * delta, frequency * delta}});
}

/// x_k = F x_{k-1} + w, y_k = H x_k + v.
inline StateSpaceModel linear_model(const Matrix& f, const Matrix& h, Matrix q, Matrix r) {
  if (f.rows() != f.cols()) throw DimensionError("linear_model: F must be square");
  if (h.cols() != f.cols()) throw DimensionError("linear_model: H has wrong column count");
  return StateSpaceModel(PolynomialMap::linear(f), PolynomialMap::linear(h), std::move(q),
                         std::move(r));
}

// ---------------------------------------------------------------------------
// Simulation.

enum class NoisePurpose : std::uint64_t { kProcess = 1, kMeasurement = 2 };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Order-sensitive hash of a key tuple, used to seed independent streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return detail::splitmix64(detail::splitmix64(detail::splitmix64(a) ^ b) ^ c);
}

/// sqrt_cov * z with z standard normal; the stream is keyed by (seed, step, purpose)
/// so a draw never depends on how many draws preceded it.
inline Vector gaussian_draw(const Matrix& sqrt_cov, std::uint64_t seed, std::uint64_t step,
                            NoisePurpose purpose) {
  std::mt19937_64 engine(mix_seed(seed, step, static_cast<std::uint64_t>(purpose)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(sqrt_cov.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(engine);
  return sqrt_cov * z;
}

struct SimulatedTrajectory {
  std::vector<Vector> states;        // x_1 .. x_T
  std::vector<Vector> measurements;  // y_1 .. y_T
  std::uint64_t seed = 0;
};

/// x0 is the true state at step 1; later states follow the model.
inline SimulatedTrajectory simulate(const StateSpaceModel& model, const Vector& x0, int steps,
                                    std::uint64_t seed) {
  if (steps < 1) throw InvalidParameter("simulate: need at least one step");
  if (static_cast<std::size_t>(x0.size()) != model.state_dim()) {
    throw DimensionError("simulate: initial state has length " + std::to_string(x0.size()) +
                         ", model state dimension is " + std::to_string(model.state_dim()));
  }
  SimulatedTrajectory out;
  out.seed = seed;
  out.states.reserve(static_cast<std::size_t>(steps));
  out.measurements.reserve(static_cast<std::size_t>(steps));
  for (int k = 1; k <= steps; ++k) {
    const auto step = static_cast<std::uint64_t>(k);
    if (k == 1) {
      out.states.push_back(x0);
    } else {
      out.states.push_back(model.dynamics_at(k).evaluate(out.states.back()) +
                           gaussian_draw(model.process_noise_sqrt(), seed, step,
                                         NoisePurpose::kProcess));
    }
    out.measurements.push_back(model.measurement().evaluate(out.states.back()) +
                               gaussian_draw(model.measurement_noise_sqrt(), seed, step,
                                             NoisePurpose::kMeasurement));
  }
  return out;
}

}  // namespace gis
