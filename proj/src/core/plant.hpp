#pragma once

// Simulated manipulator plus simulated motion-capture reference.
//
// The plant tracks commanded actuator lengths with a first-order lag, emits
// sensor lines with configurable Gaussian + spike noise, and reports ground
// truth either with the same chord model the observer uses or with a
// constant-curvature arc per module.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace softteleop::plant {

using geometry::ModuleReading;
using geometry::ModuleSpec;
using geometry::RobotPose;
using geometry::Vec3;

enum class PlantMode { chord, constant_curvature };

struct NoiseModel {
  double gauss_sigma_h_mm = 0.3;
  double gauss_sigma_angle_deg = 3.5;
  double spike_prob = 0.05;
  double spike_mag_mm = 20.0;
  std::uint64_t seed = 1;

  void validate() const;
  static NoiseModel none() { return {0.0, 0.0, 0.0, 0.0, 1}; }
};

struct InverseResult {
  ModuleReading reading;
  double residual_rms_mm = 0.0;
  int iterations = 0;
  bool converged = false;  // step size fell below tolerance within the budget
  bool exact = false;      // residual RMS within 1e-6 mm

  bool ok() const { return converged && exact; }
};

/// Finds (phi, theta, h) whose chord-model actuator lengths best match
/// `lengths_mm` (damped Gauss-Newton, finite-difference Jacobian, tilt limited
/// to the spec). Starts from `seed` when given, else from zero tilt at the
/// mean length.
InverseResult inverse_module(const ModuleSpec& spec, std::span<const double> lengths_mm,
                             const ModuleReading* seed = nullptr);

struct PlantState {
  std::vector<ModuleReading> truth;
  std::vector<ModuleReading> commanded;
  PlantMode mode = PlantMode::chord;
  std::int64_t time_ms = 0;
};

/// Rounds a reading onto the wire grid (1e-4 mm, 1e-4 deg).
ModuleReading on_wire_grid(const ModuleReading& r);

/// Zero tilt at `rest_h_mm` (clipped into each module's elongation range).
PlantState rest_state(std::span<const ModuleSpec> specs, double rest_h_mm, PlantMode mode);

/// Advances the plant by `dt_ms` towards the pose implied by
/// `commanded_lengths_mm` (all modules, concatenated).
PlantState step(std::span<const ModuleSpec> specs, const PlantState& state, double dt_ms,
                std::span<const double> commanded_lengths_mm, double tau_ms = 300.0);

/// Local top-center offset of a module bent into a circular arc of length h
/// whose end tangent is the top-plate normal.
Vec3 constant_curvature_tip(const ModuleReading& reading);

RobotPose ground_truth(std::span<const ModuleSpec> specs, const PlantState& state);

/// Seeded noise stream; successive reads draw fresh noise.
class SensorNoise {
 public:
  explicit SensorNoise(NoiseModel model);

  std::string read_sensors(const PlantState& state);
  std::vector<ModuleReading> noisy_readings(const PlantState& state);
  const NoiseModel& model() const { return model_; }

 private:
  NoiseModel model_;
  std::mt19937_64 rng_;
};

/// The plant as a device on a byte stream: accepts command lines, advances its
/// own clock, and produces sensor lines.
class Plant {
 public:
  Plant(std::vector<ModuleSpec> specs, NoiseModel noise, PlantMode mode = PlantMode::chord,
        double rest_h_mm = 41.25, double tau_ms = 300.0);

  /// Parses and stores a command line; lengths outside the elongation
  /// bounds are clamped before use.
  void handle_command_line(std::string_view line);
  void command(std::span<const double> lengths_mm);
  void advance(double dt_ms);
  std::string sensor_line();
  RobotPose ground_truth() const;

  const PlantState& state() const { return state_; }
  std::span<const ModuleSpec> specs() const { return specs_; }
  std::span<const double> last_command() const { return command_; }
  std::size_t actuator_total() const { return command_.size(); }

 private:
  std::vector<ModuleSpec> specs_;
  PlantState state_;
  SensorNoise noise_;
  double tau_ms_;
  std::vector<double> command_;
};

/// Flat actuator lengths for every module of a chain.
std::vector<double> chain_lengths(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings);

}  // namespace softteleop::plant
