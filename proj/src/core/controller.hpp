#pragma once

// Chain inverse kinematics and the outer-loop Cartesian PID that drives a
// selected platform to an operator target.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geometry.hpp"
#include "observer.hpp"
#include "plant.hpp"

namespace softteleop::controller {

using geometry::ModuleReading;
using geometry::ModuleSpec;
using geometry::RobotPose;
using geometry::Vec3;

struct PidGains {
  double kp = 0.8;
  double ki = 0.1;
  double kd = 0.05;
  double i_max_mm = 50.0;

  void validate() const;
};

struct TargetCommand {
  int module_index = 0;  // 0-based platform index
  Vec3 target_mm;
};

/// Axis-aligned box that bounds everything a platform could reach:
/// |x|, |y| <= reach and 0 < z <= reach, where reach sums the maximum
/// lengths and plate offsets below the platform.
struct WorkspaceBox {
  double reach_mm = 0.0;
  bool contains(const Vec3& p) const;
};
WorkspaceBox workspace_box(std::span<const ModuleSpec> specs, int module_index);

/// Throws Error(invalid_argument) for a bad module index or a target outside
/// the workspace box.
void validate_target(std::span<const ModuleSpec> specs, const TargetCommand& target);

/// Top center of platform `module_index` for the given readings.
Vec3 platform_position(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings, int module_index);

struct IkOptions {
  double damping = 1e-2;
  int max_iterations = 200;
  double tolerance_mm = 0.1;
  bool fix_heights = false;  // solve tilts only
  Vec3 axis_weights{1.0, 1.0, 1.0};
};

struct IkResult {
  std::vector<ModuleReading> readings;
  double error_mm = 0.0;  // weighted position error after the final clamp
  int iterations = 0;
  bool unreachable = false;
  bool saturated = false;  // implied lengths had to be clamped
};

/// Damped least squares over the readings of modules 0..module_index,
/// starting from `seed_readings`. Tilts stay within each module's limit and
/// the implied actuator lengths within the elongation bounds.
IkResult inverse_kinematics(std::span<const ModuleSpec> specs, const TargetCommand& target,
                            std::span<const ModuleReading> seed_readings, const IkOptions& options = {});

struct ControlState {
  Vec3 integral;  // mm*s
  Vec3 prev_error;
  bool has_prev = false;
  bool active = false;
  double tol_mm = 3.0;
  double timeout_ms = 20000.0;
};

struct PidOutput {
  ControlState state;
  Vec3 correction_mm;
};

/// correction = kp*e + ki*integral(e dt) + kd*de/dt with dt in seconds; the
/// integral is clamped to +-i_max_mm per axis.
PidOutput pid_step(const ControlState& ctrl, const PidGains& gains, const Vec3& error_mm, double dt_ms);

/// Clamps each module's lengths to its bounds and rounds onto the wire grid
/// without leaving the bounds.
std::vector<double> safe_command(std::span<const ModuleSpec> specs, std::span<const double> lengths_mm);

enum class Outcome { running, converged, timeout, stopped };

struct ControlSettings {
  double tol_mm = 3.0;
  double timeout_ms = 20000.0;
  double period_ms = 100.0;
};

/// One control period's decision.
struct ControlUpdate {
  Outcome outcome = Outcome::running;
  std::optional<std::vector<double>> command_mm;  // lengths to send, if any
  Vec3 error_mm;
  bool unreachable = false;
};

/// Incremental form of the State-3 loop: the caller feeds one observer
/// snapshot per period and forwards the returned command to the plant.
class MotionController {
 public:
  MotionController(std::vector<ModuleSpec> specs, PidGains gains, ControlSettings settings, IkOptions ik = {});

  void start(const TargetCommand& target);
  void stop();
  bool active() const { return state_.active; }
  const TargetCommand& target() const { return target_; }
  double elapsed_ms() const { return elapsed_ms_; }

  /// Called once per control period (the first call after start() is t = 0).
  /// `estimate` is null when the observer is stale; commands pause but the
  /// timeout clock keeps running.
  ControlUpdate update(const RobotPose* estimate, std::span<const ModuleReading> filtered);

 private:
  std::vector<ModuleSpec> specs_;
  PidGains gains_;
  ControlSettings settings_;
  IkOptions ik_;
  TargetCommand target_;
  ControlState state_;
  double elapsed_ms_ = 0.0;
  bool first_update_ = true;
  bool reach_checked_ = false;
  bool unreachable_ = false;
};

struct TraceEntry {
  std::int64_t t_ms = 0;
  Vec3 estimate;
  std::vector<double> command_mm;  // empty when nothing was sent
};

struct RunResult {
  Outcome outcome = Outcome::timeout;
  bool unreachable = false;
  double final_error_mm = 0.0;
  int commands_sent = 0;
  std::vector<TraceEntry> trace;
};

/// Closed loop against an in-process plant: estimate, PID, IK, clamp,
/// command, advance one period. Returns on convergence or timeout.
RunResult run_to_target(plant::Plant& plant, observer::Observer& observer, const TargetCommand& target,
                        const PidGains& gains, const ControlSettings& settings);

}  // namespace softteleop::controller
