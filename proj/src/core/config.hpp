#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "controller.hpp"
#include "filtering.hpp"
#include "geometry.hpp"
#include "plant.hpp"

namespace softteleop::config {

struct ControlConfig {
  controller::PidGains gains;
  double tol_mm = 3.0;
  double period_ms = 100.0;
  double timeout_ms = 20000.0;

  controller::ControlSettings settings() const { return {tol_mm, timeout_ms, period_ms}; }
};

struct AppConfig {
  std::vector<geometry::ModuleSpec> modules;
  ControlConfig control;
  plant::NoiseModel noise;
  plant::PlantMode plant_mode = plant::PlantMode::chord;
  double initial_h_mm = 41.25;
  double tau_ms = 300.0;
  filtering::KalmanParams kalman;

  void validate() const;
};

/// Two three-actuator modules whose straight rest length (two heights plus
/// one plate offset) is 85 mm.
std::vector<geometry::ModuleSpec> reference_robot();
AppConfig default_config();

nlohmann::json module_to_json(const geometry::ModuleSpec& spec);
geometry::ModuleSpec module_from_json(const nlohmann::json& j);

/// `{"modules": [...]}`; the same shape is carried by welcome/config messages.
nlohmann::json robot_spec_to_json(const std::vector<geometry::ModuleSpec>& modules);
std::vector<geometry::ModuleSpec> robot_spec_from_json(const nlohmann::json& j);

/// Missing keys keep their defaults. Throws Error(invalid_argument) on bad
/// types or values.
AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& cfg);
AppConfig load_config_file(const std::string& path);

plant::PlantMode parse_plant_mode(const std::string& s);
std::string plant_mode_name(plant::PlantMode mode);

}  // namespace softteleop::config
