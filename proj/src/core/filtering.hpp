#pragma once

// Scalar smoothing for the TOF height channel.

#include <span>
#include <vector>

namespace softteleop::filtering {

struct KalmanParams {
  double q = 0.01;  // process variance
  double r = 0.40;  // measurement variance
  double x0 = 0.0;
  double p0 = 0.40;

  void validate() const;
};

struct KalmanState {
  double x = 0.0;  // estimate, mm
  double p = 0.0;  // covariance, mm^2
};

/// One predict/update cycle of a constant-state model. Throws on a
/// non-finite measurement; callers treat that as a dropout and keep `state`.
KalmanState kalman_step(const KalmanState& state, const KalmanParams& params, double z);

/// Positive root of p^2 + q p - q r = 0, the steady-state posterior covariance.
double steady_state_covariance(double q, double r);

/// Gain reached once the covariance has settled.
double steady_state_gain(double q, double r);

double mean_filter(std::span<const double> window);

/// Runs the filter from (params.x0, params.p0) and returns the estimate after
/// each measurement.
std::vector<double> filter_series(const KalmanParams& params, std::span<const double> zs);

}  // namespace softteleop::filtering
