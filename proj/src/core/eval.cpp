#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "error.hpp"
#include "observer.hpp"
#include "plant.hpp"

namespace softteleop::eval {

using nlohmann::json;

ErrorRow stats_from_errors(std::span<const double> errors) {
  const std::size_t n = errors.size();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "error statistics need at least two samples");
  std::vector<double> abs_e(n);
  double sum_abs = 0.0, sum_sq = 0.0, sum_signed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    abs_e[i] = std::abs(errors[i]);
    sum_abs += abs_e[i];
    sum_sq += errors[i] * errors[i];
    sum_signed += errors[i];
  }
  const double dn = static_cast<double>(n);
  ErrorRow row;
  row.mae = sum_abs / dn;
  row.rmse = std::sqrt(sum_sq / dn);
  const double mean_signed = sum_signed / dn;
  double var_abs = 0.0, var_signed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    var_abs += (abs_e[i] - row.mae) * (abs_e[i] - row.mae);
    var_signed += (errors[i] - mean_signed) * (errors[i] - mean_signed);
  }
  row.std = std::sqrt(var_abs / (dn - 1.0));
  row.std_signed = std::sqrt(var_signed / (dn - 1.0));
  row.max_mae = *std::max_element(abs_e.begin(), abs_e.end());
  row.q1 = percentile(abs_e, 0.25);
  row.q3 = percentile(abs_e, 0.75);
  return row;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ErrorRow compute_stats(std::span<const Sample> samples, Axis axis) {
  std::vector<double> e;
  e.reserve(samples.size());
  for (const Sample& s : samples) {
    const Vec3 d = s.estimate - s.truth;
    switch (axis) {
      case Axis::x: e.push_back(d.x); break;
      case Axis::y: e.push_back(d.y); break;
      case Axis::z: e.push_back(d.z); break;
      case Axis::global: e.push_back(std::hypot(d.x, d.y)); break;
    }
  }
  return stats_from_errors(e);
}

ErrorReport build_report(std::span<const Sample> samples) {
  return {compute_stats(samples, Axis::x), compute_stats(samples, Axis::y), compute_stats(samples, Axis::global),
          compute_stats(samples, Axis::z), samples.size()};
}

namespace {

std::string csv_row(const char* name, const ErrorRow& r) {
  using observer::format_decimal;
  std::string s = name;
  for (double v : {r.mae, r.rmse, r.std, r.max_mae, r.q1, r.q3}) {
    s += ',';
    s += format_decimal(v);
  }
  s += '\n';
  return s;
}

json row_json(const ErrorRow& r) {
  using observer::quantize;
  return {{"mae", quantize(r.mae)},   {"rmse", quantize(r.rmse)}, {"std", quantize(r.std)},
          {"max_mae", quantize(r.max_mae)}, {"q1", quantize(r.q1)},     {"q3", quantize(r.q3)},
          {"std_signed", quantize(r.std_signed)}};
}

}  // namespace

std::string report_csv(const ErrorReport& report) {
  return "metric,mae,rmse,std,max_mae,q1,q3\n" + csv_row("x", report.x) + csv_row("y", report.y) +
         csv_row("global", report.global);
}

json report_json(const ErrorReport& report) {
  return {{"x", row_json(report.x)},
          {"y", row_json(report.y)},
          {"global", row_json(report.global)},
          {"z_extra", row_json(report.z)},
          {"sample_count", report.sample_count}};
}

void emit_report(const ErrorReport& report, ReportFormat format, const std::string& path) {
  if (report.sample_count == 0) throw Error(ErrorCode::invalid_argument, "refusing to write an empty report");
  const std::string body = format == ReportFormat::csv ? report_csv(report) : report_json(report).dump(2) + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write report to " + path);
  out << body;
  if (!out) throw Error(ErrorCode::io_error, "failed writing report to " + path);
}

std::string samples_csv(std::span<const Sample> samples) {
  std::string out = "t_ms,est_x,est_y,est_z,true_x,true_y,true_z\n";
  char buf[256];
  for (const Sample& s : samples) {
    const int n = std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                                static_cast<long long>(s.t_ms), s.estimate.x, s.estimate.y, s.estimate.z,
                                s.truth.x, s.truth.y, s.truth.z);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

void TrajectorySpec::validate() const {
  if (!(duration_s > 0.0) || !(sample_period_ms > 0.0))
    throw Error(ErrorCode::invalid_argument, "trajectory needs duration_s > 0 and sample_period_ms > 0");
  if (sample_count() < 2) throw Error(ErrorCode::invalid_argument, "trajectory must yield at least two samples");
  if (kind == Kind::waypoints && waypoints.empty())
    throw Error(ErrorCode::invalid_argument, "waypoint trajectory without waypoints");
  if (kind != Kind::waypoints && (!(amplitude_mm >= 0.0) || !(period_s > 0.0)))
    throw Error(ErrorCode::invalid_argument, "parametric trajectory needs amplitude_mm >= 0 and period_s > 0");
}

std::size_t TrajectorySpec::sample_count() const {
  return static_cast<std::size_t>(std::floor(duration_s * 1000.0 / sample_period_ms + 1e-9));
}

TrajectorySpec load_trajectory(const std::string& arg) {
  TrajectorySpec traj;
  if (arg == "builtin:circle") return traj;
  if (arg == "builtin:lemniscate") {
    traj.kind = TrajectorySpec::Kind::lemniscate;
    return traj;
  }
  std::ifstream in(arg);
  if (!in) throw Error(ErrorCode::io_error, "cannot open trajectory file " + arg);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::parse_error, "trajectory file is not a JSON object");
  try {
    if (j.contains("waypoints")) {
      traj.kind = TrajectorySpec::Kind::waypoints;
      for (const json& w : j.at("waypoints")) {
        const auto pos = w.at("pos_mm").get<std::vector<double>>();
        if (pos.size() != 3) throw Error(ErrorCode::parse_error, "waypoint pos_mm needs 3 numbers");
        traj.waypoints.push_back({w.at("module").get<int>(), {pos[0], pos[1], pos[2]}});
      }
    } else {
      const std::string kind = j.value("kind", "circle");
      if (kind == "circle")
        traj.kind = TrajectorySpec::Kind::circle;
      else if (kind == "lemniscate")
        traj.kind = TrajectorySpec::Kind::lemniscate;
      else
        throw Error(ErrorCode::parse_error, "unknown trajectory kind '" + kind + "'");
      traj.amplitude_mm = j.value("amplitude_mm", traj.amplitude_mm);
      traj.period_s = j.value("period_s", traj.period_s);
    }
    traj.duration_s = j.value("duration_s", traj.duration_s);
    traj.sample_period_ms = j.value("sample_period_ms", traj.sample_period_ms);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("trajectory file: ") + e.what());
  }
  traj.validate();
  return traj;
}

Vec3 path_point(const TrajectorySpec& traj, double t_s) {
  const double w = 2.0 * M_PI * t_s / traj.period_s;
  const double a = traj.amplitude_mm;
  if (traj.kind == TrajectorySpec::Kind::lemniscate) return {a * std::sin(w), a * std::sin(w) * std::cos(w), 0.0};
  return {a * std::cos(w), a * std::sin(w), 0.0};
}

std::vector<Sample> run_eval(const config::AppConfig& cfg, const TrajectorySpec& traj) {
  cfg.validate();
  traj.validate();
  const std::vector<geometry::ModuleSpec>& specs = cfg.modules;
  plant::Plant plant(specs, cfg.noise, cfg.plant_mode, cfg.initial_h_mm, cfg.tau_ms);
  observer::Observer obs(specs, cfg.kalman);

  const int last = static_cast<int>(specs.size()) - 1;
  const bool parametric = traj.kind != TrajectorySpec::Kind::waypoints;
  controller::IkOptions ik;
  if (parametric) {
    ik.fix_heights = true;
    ik.axis_weights = {1.0, 1.0, 0.0};
  }

  std::vector<geometry::ModuleReading> plan = plant.state().truth;
  const std::size_t n = traj.sample_count();
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t_s = static_cast<double>(k) * traj.sample_period_ms / 1000.0;
    controller::TargetCommand target;
    if (parametric) {
      target = {last, path_point(traj, t_s)};
    } else {
      const std::size_t idx = std::min(traj.waypoints.size() - 1, k * traj.waypoints.size() / n);
      target = traj.waypoints[idx];
    }
    const controller::IkResult sol = controller::inverse_kinematics(specs, target, plan, ik);
    plan = sol.readings;
    plant.handle_command_line(
        observer::format_command_line(controller::safe_command(specs, plant::chain_lengths(specs, plan))));
    plant.advance(traj.sample_period_ms);

    obs.ingest(observer::parse_sensor_line(plant.sensor_line()));
    const geometry::RobotPose& est = obs.estimate();
    const geometry::RobotPose truth = plant.ground_truth();

    Sample s;
    s.t_ms = plant.state().time_ms;
    s.estimate = est.end_effector;
    s.truth = truth.end_effector;
    s.flagged = sol.unreachable;
    for (const geometry::ModuleReading& r : plant.state().truth)
      s.tilt_rad += std::acos(std::clamp(std::cos(r.phi_rad) * std::cos(r.theta_rad), -1.0, 1.0));
    samples.push_back(s);
  }
  return samples;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorCode::invalid_argument, "rank correlation needs equal sizes >= 2");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace softteleop::eval
