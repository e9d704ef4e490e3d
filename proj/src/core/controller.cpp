#include "controller.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace softteleop::controller {

using geometry::Mat3;

namespace {

constexpr double kFdStep = 1e-6;

Vec3 weighted(const Vec3& v, const Vec3& w) { return {v.x * w.x, v.y * w.y, v.z * w.z}; }

// Keeps the implied actuator lengths inside the elongation bounds by sliding
// the module height.
void project_reading(const ModuleSpec& spec, ModuleReading& r) {
  const double lim = spec.tilt_limit_rad();
  r.phi_rad = std::clamp(r.phi_rad, -lim, lim);
  r.theta_rad = std::clamp(r.theta_rad, -lim, lim);
  r.h_mm = std::clamp(r.h_mm, spec.min_len_mm, spec.max_len_mm);
  for (int pass = 0; pass < 3; ++pass) {
    const std::vector<double> l = geometry::actuator_lengths(spec, r);
    const auto [lo, hi] = std::minmax_element(l.begin(), l.end());
    if (*lo < spec.min_len_mm)
      r.h_mm += spec.min_len_mm - *lo;
    else if (*hi > spec.max_len_mm)
      r.h_mm -= *hi - spec.max_len_mm;
    else
      break;
  }
}

}  // namespace

void PidGains::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0) || !(i_max_mm > 0.0))
    throw Error(ErrorCode::invalid_argument, "pid gains need kp, ki, kd >= 0 and i_max_mm > 0");
}

bool WorkspaceBox::contains(const Vec3& p) const {
  return p.finite() && std::abs(p.x) <= reach_mm && std::abs(p.y) <= reach_mm && p.z > 0.0 && p.z <= reach_mm;
}

WorkspaceBox workspace_box(std::span<const ModuleSpec> specs, int module_index) {
  WorkspaceBox box;
  for (int i = 0; i <= module_index && i < static_cast<int>(specs.size()); ++i) {
    box.reach_mm += specs[static_cast<std::size_t>(i)].max_len_mm;
    if (i < module_index) box.reach_mm += specs[static_cast<std::size_t>(i)].plate_offset_mm;
  }
  return box;
}

void validate_target(std::span<const ModuleSpec> specs, const TargetCommand& target) {
  if (target.module_index < 0 || target.module_index >= static_cast<int>(specs.size()))
    throw Error(ErrorCode::invalid_argument, "target module index " + std::to_string(target.module_index) +
                                                 " out of range");
  if (!workspace_box(specs, target.module_index).contains(target.target_mm))
    throw Error(ErrorCode::invalid_argument, "target outside the workspace box");
}

Vec3 platform_position(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings, int module_index) {
  Vec3 origin{};
  Mat3 frame = Mat3::identity();
  for (int i = 0;; ++i) {
    const ModuleReading& r = readings[static_cast<std::size_t>(i)];
    const Vec3 center = origin + frame * Vec3{0.0, 0.0, r.h_mm};
    if (i == module_index) return center;
    frame = frame * geometry::rotation_from_imu(r.phi_rad, r.theta_rad);
    origin = center + specs[static_cast<std::size_t>(i)].plate_offset_mm * frame.column(2);
  }
}

IkResult inverse_kinematics(std::span<const ModuleSpec> specs, const TargetCommand& target,
                            std::span<const ModuleReading> seed_readings, const IkOptions& options) {
  const int m = target.module_index;
  if (m < 0 || m >= static_cast<int>(specs.size()))
    throw Error(ErrorCode::invalid_argument, "inverse_kinematics: module index out of range");
  if (seed_readings.size() != specs.size())
    throw Error(ErrorCode::count_mismatch, "inverse_kinematics: need one seed reading per module");

  IkResult out;
  out.readings.assign(seed_readings.begin(), seed_readings.end());
  std::vector<ModuleReading>& q = out.readings;
  for (int i = 0; i <= m; ++i) project_reading(specs[static_cast<std::size_t>(i)], q[static_cast<std::size_t>(i)]);

  const int per_module = options.fix_heights ? 2 : 3;
  const std::size_t vars = static_cast<std::size_t>((m + 1) * per_module);
  auto var = [&](std::size_t k) -> double& {
    ModuleReading& r = q[k / static_cast<std::size_t>(per_module)];
    switch (k % static_cast<std::size_t>(per_module)) {
      case 0: return r.phi_rad;
      case 1: return r.theta_rad;
      default: return r.h_mm;
    }
  };
  auto residual = [&] {
    return weighted(target.target_mm - platform_position(specs, q, m), options.axis_weights);
  };

  std::vector<Vec3> jac(vars);  // column k: d(weighted position)/d(var k)
  const double lambda_sq = options.damping * options.damping;
  Vec3 e = residual();
  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    if (e.norm() < options.tolerance_mm) break;
    for (std::size_t k = 0; k < vars; ++k) {
      double& v = var(k);
      const double saved = v;
      v = saved + kFdStep;
      const Vec3 plus = platform_position(specs, q, m);
      v = saved - kFdStep;
      const Vec3 minus = platform_position(specs, q, m);
      v = saved;
      jac[k] = weighted((1.0 / (2.0 * kFdStep)) * (plus - minus), options.axis_weights);
    }
    Mat3 jjt;
    for (const Vec3& c : jac) {
      const double col[3] = {c.x, c.y, c.z};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) jjt(a, b) += col[a] * col[b];
    }
    for (int d = 0; d < 3; ++d) jjt(d, d) += lambda_sq;
    const Vec3 y = geometry::solve(jjt, e);

    double step_sq = 0.0;
    for (std::size_t k = 0; k < vars; ++k) {
      const double delta = jac[k].dot(y);
      var(k) += delta;
      step_sq += delta * delta;
    }
    for (int i = 0; i <= m; ++i) project_reading(specs[static_cast<std::size_t>(i)], q[static_cast<std::size_t>(i)]);
    e = residual();
    if (step_sq < 1e-24) break;
  }

  // Final safety pass on the implied lengths.
  for (int i = 0; i <= m; ++i) {
    const ModuleSpec& spec = specs[static_cast<std::size_t>(i)];
    ModuleReading& r = q[static_cast<std::size_t>(i)];
    const geometry::ClampResult c = geometry::clamp_lengths(spec, geometry::actuator_lengths(spec, r));
    if (c.any_saturated()) {
      out.saturated = true;
      r = plant::inverse_module(spec, c.lengths_mm, &r).reading;
    }
  }
  e = residual();
  out.error_mm = e.norm();
  out.unreachable = out.error_mm >= options.tolerance_mm ||
                    !workspace_box(specs, m).contains(target.target_mm);
  return out;
}

PidOutput pid_step(const ControlState& ctrl, const PidGains& gains, const Vec3& error_mm, double dt_ms) {
  if (!(dt_ms > 0.0)) throw Error(ErrorCode::invalid_argument, "pid_step needs dt_ms > 0");
  const double dt = dt_ms / 1000.0;
  PidOutput out{ctrl, {}};
  ControlState& s = out.state;
  auto clamp_axis = [&](double v) { return std::clamp(v, -gains.i_max_mm, gains.i_max_mm); };
  s.integral = {clamp_axis(s.integral.x + error_mm.x * dt), clamp_axis(s.integral.y + error_mm.y * dt),
                clamp_axis(s.integral.z + error_mm.z * dt)};
  const Vec3 derivative = ctrl.has_prev ? (1.0 / dt) * (error_mm - ctrl.prev_error) : Vec3{};
  out.correction_mm = gains.kp * error_mm + gains.ki * s.integral + gains.kd * derivative;
  s.prev_error = error_mm;
  s.has_prev = true;
  return out;
}

std::vector<double> safe_command(std::span<const ModuleSpec> specs, std::span<const double> lengths_mm) {
  std::vector<double> out;
  out.reserve(lengths_mm.size());
  std::size_t offset = 0;
  for (const ModuleSpec& spec : specs) {
    const std::size_t n = static_cast<std::size_t>(spec.actuator_count);
    if (offset + n > lengths_mm.size()) throw Error(ErrorCode::count_mismatch, "safe_command: too few lengths");
    for (double l : geometry::clamp_lengths(spec, lengths_mm.subspan(offset, n)).lengths_mm) {
      double g = observer::quantize(l);
      if (g > spec.max_len_mm) g = std::floor(spec.max_len_mm * 1e4) / 1e4;
      if (g < spec.min_len_mm) g = std::ceil(spec.min_len_mm * 1e4) / 1e4;
      out.push_back(g);
    }
    offset += n;
  }
  if (offset != lengths_mm.size()) throw Error(ErrorCode::count_mismatch, "safe_command: too many lengths");
  return out;
}

MotionController::MotionController(std::vector<ModuleSpec> specs, PidGains gains, ControlSettings settings,
                                   IkOptions ik)
    : specs_(std::move(specs)), gains_(gains), settings_(settings), ik_(ik) {
  gains_.validate();
  if (!(settings_.tol_mm > 0.0) || !(settings_.period_ms > 0.0) || !(settings_.timeout_ms > 0.0))
    throw Error(ErrorCode::invalid_argument, "control settings need tol, period and timeout > 0");
}

void MotionController::start(const TargetCommand& target) {
  if (target.module_index < 0 || target.module_index >= static_cast<int>(specs_.size()))
    throw Error(ErrorCode::invalid_argument, "target module index out of range");
  target_ = target;
  state_ = ControlState{};
  state_.active = true;
  state_.tol_mm = settings_.tol_mm;
  state_.timeout_ms = settings_.timeout_ms;
  elapsed_ms_ = 0.0;
  first_update_ = true;
  reach_checked_ = false;
  unreachable_ = false;
}

void MotionController::stop() { state_.active = false; }

ControlUpdate MotionController::update(const RobotPose* estimate, std::span<const ModuleReading> filtered) {
  ControlUpdate out;
  if (!state_.active) {
    out.outcome = Outcome::stopped;
    return out;
  }
  if (!first_update_) elapsed_ms_ += settings_.period_ms;
  first_update_ = false;

  if (estimate == nullptr) {
    out.unreachable = unreachable_;
    if (elapsed_ms_ >= settings_.timeout_ms) {
      out.outcome = Outcome::timeout;
      state_.active = false;
    }
    return out;
  }

  const Vec3 position = estimate->modules[static_cast<std::size_t>(target_.module_index)].top_center;
  out.error_mm = target_.target_mm - position;
  if (!reach_checked_) {
    unreachable_ = inverse_kinematics(specs_, target_, filtered, ik_).unreachable;
    reach_checked_ = true;
  }
  out.unreachable = unreachable_;
  if (out.error_mm.norm() <= settings_.tol_mm) {
    out.outcome = Outcome::converged;
    state_.active = false;
    return out;
  }
  if (elapsed_ms_ >= settings_.timeout_ms) {
    out.outcome = Outcome::timeout;
    state_.active = false;
    return out;
  }

  const PidOutput pid = pid_step(state_, gains_, out.error_mm, settings_.period_ms);
  state_ = pid.state;
  const TargetCommand shifted{target_.module_index, target_.target_mm + pid.correction_mm};
  const IkResult ik = inverse_kinematics(specs_, shifted, filtered, ik_);
  out.command_mm = safe_command(specs_, plant::chain_lengths(specs_, ik.readings));
  return out;
}

RunResult run_to_target(plant::Plant& plant, observer::Observer& observer, const TargetCommand& target,
                        const PidGains& gains, const ControlSettings& settings) {
  const std::vector<ModuleSpec> specs(plant.specs().begin(), plant.specs().end());
  MotionController ctrl(specs, gains, settings);
  ctrl.start(target);

  RunResult result;
  std::int64_t t_ms = plant.state().time_ms;
  observer.ingest(observer::parse_sensor_line(plant.sensor_line()));
  const RobotPose* pose = &observer.estimate();
  while (true) {
    ControlUpdate upd = ctrl.update(pose, observer.filtered());
    result.unreachable = upd.unreachable;
    result.final_error_mm = upd.error_mm.norm();
    TraceEntry entry{t_ms, pose->modules[static_cast<std::size_t>(target.module_index)].top_center, {}};
    if (upd.command_mm) {
      plant.handle_command_line(observer::format_command_line(*upd.command_mm));
      entry.command_mm = std::move(*upd.command_mm);
      ++result.commands_sent;
    }
    result.trace.push_back(std::move(entry));
    if (upd.outcome != Outcome::running) {
      result.outcome = upd.outcome;
      return result;
    }
    plant.advance(settings.period_ms);
    t_ms = plant.state().time_ms;
    observer.ingest(observer::parse_sensor_line(plant.sensor_line()));
    pose = &observer.estimate();
  }
}

}  // namespace softteleop::controller
