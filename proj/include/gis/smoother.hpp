#pragma once

// Gaussian forward filter and Rauch-Tung-Striebel backward pass, generic over
// the moment strategy.

#include <chrono>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gis/core.hpp"
#include "gis/models.hpp"
#include "gis/strategies.hpp"

namespace gis {

struct ForwardStepRecord {
  GaussianBelief predicted;  // x_{k|k-1}, P_{k|k-1}
  GaussianBelief filtered;   // x_{k|k},   P_{k|k}
  Matrix cross;              // Cov(x_{k-1}, x_k) from the prediction step
  Matrix gain;               // K_k
  Vector innovation;         // y_k - yhat_{k|k-1}
};

struct SmoothingResult {
  std::vector<ForwardStepRecord> forward;  // steps 1..T
  std::vector<GaussianBelief> smoothed;    // steps 1..T
  std::vector<Matrix> smoother_gains;      // G_1..G_{T-1}
  double forward_seconds = 0.0;
  double backward_seconds = 0.0;
};

namespace detail {

// Runs fn, converting linear-algebra failures into a NumericalFailure that
// names the step.
template <class Fn>
auto at_step(int step, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NotSpd& e) {
    throw NumericalFailure(step, e.what());
  } catch (const NotPsd& e) {
    throw NumericalFailure(step, e.what());
  } catch (const InvalidMatrix& e) {
    throw NumericalFailure(step, e.what());
  }
}

}  // namespace detail

template <MomentStrategy S>
std::vector<ForwardStepRecord> forward_filter(const StateSpaceModel& model,
                                              const std::vector<Vector>& measurements,
                                              const GaussianBelief& init, const S& strategy) {
  const std::size_t n = model.state_dim();
  const std::size_t m = model.measurement_dim();
  if (static_cast<std::size_t>(init.dim()) != n) {
    throw DimensionError("forward_filter: initial belief has dimension " +
                         std::to_string(init.dim()) + ", model state dimension is " +
                         std::to_string(n));
  }
  if (measurements.empty()) throw InvalidParameter("forward_filter: no measurements");
  std::vector<ForwardStepRecord> records;
  records.reserve(measurements.size());
  GaussianBelief previous = init;
  for (std::size_t idx = 0; idx < measurements.size(); ++idx) {
    const int k = static_cast<int>(idx) + 1;
    const Vector& y = measurements[idx];
    if (static_cast<std::size_t>(y.size()) != m) {
      throw DimensionError("forward_filter: measurement " + std::to_string(k) + " has length " +
                           std::to_string(y.size()) + ", expected " + std::to_string(m));
    }
    records.push_back(detail::at_step(k, [&] {
      PredictedMoments pred =
          predict(strategy, model.dynamics_at(k), model.process_noise(), previous);
      GaussianBelief predicted(std::move(pred.mean), pred.covariance);
      MeasurementMoments meas =
          measure(strategy, model.measurement(), model.measurement_noise(), predicted);
      // K = P_xy P_yy^-1, i.e. K^T = P_yy^-1 P_xy^T.
      Matrix gain = solve_spd(meas.innovation_covariance, meas.cross_covariance.transpose())
                        .transpose();
      Vector innovation = y - meas.predicted_measurement;
      Vector mean = predicted.mean() + gain * innovation;
      Matrix cov = symmetrize_and_project(
          predicted.covariance() - gain * meas.innovation_covariance * gain.transpose());
      if (!mean.allFinite() || !cov.allFinite()) {
        throw NumericalFailure(k, "non-finite filtered estimate");
      }
      return ForwardStepRecord{predicted, GaussianBelief(std::move(mean), cov),
                               std::move(pred.cross), std::move(gain), std::move(innovation)};
    }));
    previous = records.back().filtered;
  }
  return records;
}

/// Backward recursion over stored forward records; needs no model or strategy.
inline SmoothingResult rts_backward(std::vector<ForwardStepRecord> records) {
  if (records.empty()) throw InvalidParameter("rts_backward: no forward records");
  const std::size_t steps = records.size();
  SmoothingResult out;
  out.smoothed.resize(steps);
  out.smoother_gains.resize(steps - 1);
  out.smoothed[steps - 1] = records[steps - 1].filtered;
  for (std::size_t idx = steps - 1; idx-- > 0;) {
    const int k = static_cast<int>(idx) + 1;
    const ForwardStepRecord& now = records[idx];
    const ForwardStepRecord& next = records[idx + 1];
    const GaussianBelief& later = out.smoothed[idx + 1];
    out.smoothed[idx] = detail::at_step(k, [&] {
      // G = C P_pred^-1 with C = Cov(x_k, x_{k+1}).
      Matrix gain = solve_spd(next.predicted.covariance(), next.cross.transpose()).transpose();
      Vector mean = now.filtered.mean() + gain * (later.mean() - next.predicted.mean());
      Matrix cov = symmetrize_and_project(
          now.filtered.covariance() +
          gain * (later.covariance() - next.predicted.covariance()) * gain.transpose());
      if (!mean.allFinite() || !cov.allFinite()) {
        throw NumericalFailure(k, "non-finite smoothed estimate");
      }
      out.smoother_gains[idx] = std::move(gain);
      return GaussianBelief(std::move(mean), cov);
    });
  }
  out.forward = std::move(records);
  return out;
}

template <MomentStrategy S>
SmoothingResult smooth(const StateSpaceModel& model, const std::vector<Vector>& measurements,
                       const GaussianBelief& init, const S& strategy) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto records = forward_filter(model, measurements, init, strategy);
  const auto t1 = Clock::now();
  SmoothingResult out = rts_backward(std::move(records));
  const auto t2 = Clock::now();
  out.forward_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.backward_seconds = std::chrono::duration<double>(t2 - t1).count();
  return out;
}

inline std::vector<ForwardStepRecord> forward_filter(const StateSpaceModel& model,
                                                     const std::vector<Vector>& measurements,
                                                     const GaussianBelief& init,
                                                     const AnyStrategy& strategy) {
  return std::visit([&](const auto& s) { return forward_filter(model, measurements, init, s); },
                    strategy);
}

inline SmoothingResult smooth(const StateSpaceModel& model, const std::vector<Vector>& measurements,
                              const GaussianBelief& init, const AnyStrategy& strategy) {
  return std::visit([&](const auto& s) { return smooth(model, measurements, init, s); }, strategy);
}

}  // namespace gis
