#pragma once

// Sensor frames in, robot pose out.
//
// Wire formats (ASCII, newline-terminated, angles in degrees):
//   S,<t_ms>,<h1_mm>,<phi1_deg>,<theta1_deg>[,<h2_mm>,<phi2_deg>,<theta2_deg>,...]
//   C,<l1_mm>,...,<lM_mm>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "filtering.hpp"
#include "geometry.hpp"

namespace softteleop::observer {

using geometry::ModuleReading;
using geometry::ModuleSpec;
using geometry::RobotPose;

struct SensorFrame {
  std::int64_t t_ms = 0;
  std::vector<ModuleReading> readings;
};

/// Parse failure; `field()` is 1-based, counting the leading tag as field 1.
class ParseError : public Error {
 public:
  ParseError(int field, const std::string& what);
  int field() const noexcept { return field_; }

 private:
  int field_;
};

SensorFrame parse_sensor_line(std::string_view line);
std::string format_sensor_line(const SensorFrame& frame);

std::vector<double> parse_command_line(std::string_view line);
std::string format_command_line(std::span<const double> lengths_mm);

/// Fixed-point text with at most four fractional digits ("40.0", "-0.1235").
std::string format_decimal(double value);

/// Rounds to the four-fractional-digit grid used on the wire.
double quantize(double value);

class Observer {
 public:
  explicit Observer(std::vector<ModuleSpec> specs, filtering::KalmanParams params = {});

  /// Filters the TOF heights of `frame`; IMU angles pass through. Returns the
  /// filtered readings. Throws on module-count mismatch or a timestamp that
  /// goes backwards.
  const std::vector<ModuleReading>& ingest(const SensorFrame& frame);

  /// Forward kinematics over the filtered readings; caches the result.
  const RobotPose& estimate();

  std::span<const ModuleSpec> specs() const { return specs_; }
  const std::vector<ModuleReading>& filtered() const { return filtered_; }
  const std::optional<RobotPose>& last_pose() const { return last_pose_; }
  std::optional<std::int64_t> last_frame_ms() const { return last_t_ms_; }
  bool has_frame() const { return last_t_ms_.has_value(); }

  /// No frame yet, or none within five sampling periods of `now_ms`.
  bool is_stale(std::int64_t now_ms, std::int64_t period_ms) const;

 private:
  std::vector<ModuleSpec> specs_;
  filtering::KalmanParams params_;
  std::vector<filtering::KalmanState> filters_;
  std::vector<ModuleReading> filtered_;
  std::optional<std::int64_t> last_t_ms_;
  std::optional<RobotPose> last_pose_;
};

}  // namespace softteleop::observer
