#pragma once

// Observer-vs-ground-truth evaluation: drive the simulated plant along a
// trajectory, sample estimate and truth every period, and summarize the
// errors per axis.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "controller.hpp"
#include "geometry.hpp"

namespace softteleop::eval {

using geometry::Vec3;

struct Sample {
  std::int64_t t_ms = 0;
  Vec3 estimate;
  Vec3 truth;
  double tilt_rad = 0.0;  // sum over modules of the true top-plate tilt
  bool flagged = false;   // trajectory point not reachable by the IK
};

enum class Axis { x, y, global, z };

/// One row of the error table; every column is over |e|.
struct ErrorRow {
  double mae = 0.0;
  double rmse = 0.0;
  double std = 0.0;         // sample standard deviation of |e|
  double max_mae = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double std_signed = 0.0;  // sample standard deviation of the signed error
};

struct ErrorReport {
  ErrorRow x;
  ErrorRow y;
  ErrorRow global;  // planar norm of (e_x, e_y)
  ErrorRow z;       // extra row, not part of the planar table
  std::size_t sample_count = 0;
};

/// Statistics of a list of signed errors. Needs at least two values.
ErrorRow stats_from_errors(std::span<const double> errors);

/// Linear interpolation between order statistics (p in [0, 1]).
double percentile(std::vector<double> values, double p);

ErrorRow compute_stats(std::span<const Sample> samples, Axis axis);
ErrorReport build_report(std::span<const Sample> samples);

enum class ReportFormat { csv, json };

/// `metric,mae,rmse,std,max_mae,q1,q3` then rows x, y, global.
std::string report_csv(const ErrorReport& report);
nlohmann::json report_json(const ErrorReport& report);

/// Refuses to write an empty report (throws, no file is created).
void emit_report(const ErrorReport& report, ReportFormat format, const std::string& path);

std::string samples_csv(std::span<const Sample> samples);

struct TrajectorySpec {
  enum class Kind { circle, lemniscate, waypoints };
  Kind kind = Kind::circle;
  double amplitude_mm = 6.0;
  double period_s = 20.0;
  std::vector<controller::TargetCommand> waypoints;
  double duration_s = 60.0;
  double sample_period_ms = 100.0;

  void validate() const;
  std::size_t sample_count() const;
};

/// "builtin:circle", "builtin:lemniscate", or a path to a JSON file with
/// {"kind", "amplitude_mm", "period_s"} or {"waypoints": [{"module", "pos_mm"}]}.
TrajectorySpec load_trajectory(const std::string& arg);

/// Planar path point at time t for the parametric kinds.
Vec3 path_point(const TrajectorySpec& traj, double t_s);

/// Runs the plant open-loop along the trajectory with the observer in the
/// loop. Parametric paths are tracked by tilting only, so the TOF channels see
/// constant heights. Deterministic for a fixed config (noise seed included).
std::vector<Sample> run_eval(const config::AppConfig& cfg, const TrajectorySpec& traj);

/// Spearman rank correlation (average ranks for ties).
double rank_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace softteleop::eval
