#include "filtering.hpp"

#include <cmath>

#include "error.hpp"

namespace softteleop::filtering {

void KalmanParams::validate() const {
  if (!(q > 0.0) || !(r > 0.0) || !(p0 >= 0.0) || !std::isfinite(x0) || !std::isfinite(q) ||
      !std::isfinite(r) || !std::isfinite(p0))
    throw Error(ErrorCode::invalid_argument, "kalman params need q > 0, r > 0, p0 >= 0");
}

KalmanState kalman_step(const KalmanState& state, const KalmanParams& params, double z) {
  if (!std::isfinite(z)) throw Error(ErrorCode::invalid_argument, "kalman_step: non-finite measurement");
  const double p_prior = state.p + params.q;
  const double gain = p_prior / (p_prior + params.r);
  return {state.x + gain * (z - state.x), (1.0 - gain) * p_prior};
}

double steady_state_covariance(double q, double r) { return 0.5 * (-q + std::sqrt(q * q + 4.0 * q * r)); }

double steady_state_gain(double q, double r) {
  const double p_prior = steady_state_covariance(q, r) + q;
  return p_prior / (p_prior + r);
}

double mean_filter(std::span<const double> window) {
  if (window.empty()) throw Error(ErrorCode::invalid_argument, "mean_filter: empty window");
  double sum = 0.0;
  for (double v : window) sum += v;
  return sum / static_cast<double>(window.size());
}

std::vector<double> filter_series(const KalmanParams& params, std::span<const double> zs) {
  params.validate();
  std::vector<double> out;
  out.reserve(zs.size());
  KalmanState state{params.x0, params.p0};
  for (double z : zs) {
    state = kalman_step(state, params, z);
    out.push_back(state.x);
  }
  return out;
}

}  // namespace softteleop::filtering
