// Smooth one simulated Van der Pol trajectory with each strategy and print
// the time-averaged estimation error.

#include <cmath>
#include <cstdio>

#include "gis/models.hpp"
#include "gis/smoother.hpp"

int main() {
  using namespace gis;
  const auto model = vdp_model(100.0, 1.85 * M_PI / 2, 0.01, Matrix::Identity(3, 3) * 1e-3,
                               Matrix::Identity(2, 2) * 1e-1);
  const auto truth = simulate(model, Vector{{2.75, 0.0, 2.0}}, 300, 1);

  Matrix p0 = Matrix::Zero(3, 3);
  p0.diagonal() << 10, 10, 0.5;
  const GaussianBelief prior(Vector{{0.0, -3.0, 1.0}}, p0);

  std::printf("%-4s %10s %10s %10s\n", "", "filter", "smoother", "seconds");
  for (auto name : kStrategyNames) {
    const SmoothingResult res = smooth(model, truth.measurements, prior, make_strategy(name));
    double filter_err = 0, smoother_err = 0;
    for (std::size_t k = 0; k < truth.states.size(); ++k) {
      filter_err += (res.forward[k].filtered.mean() - truth.states[k]).norm();
      smoother_err += (res.smoothed[k].mean() - truth.states[k]).norm();
    }
    const double steps = static_cast<double>(truth.states.size());
    std::printf("%-4.*s %10.5f %10.5f %10.4f\n", static_cast<int>(name.size()), name.data(),
                filter_err / steps, smoother_err / steps, res.forward_seconds + res.backward_seconds);
  }
}
