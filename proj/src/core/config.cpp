#include "config.hpp"

#include <fstream>

#include "error.hpp"

namespace softteleop::config {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void AppConfig::validate() const {
  if (modules.empty()) throw Error(ErrorCode::invalid_argument, "config needs at least one module");
  for (const geometry::ModuleSpec& m : modules) m.validate();
  control.gains.validate();
  if (!(control.tol_mm > 0.0) || !(control.period_ms > 0.0) || !(control.timeout_ms > 0.0))
    throw Error(ErrorCode::invalid_argument, "control tol_mm, period_ms and timeout_ms must be > 0");
  noise.validate();
  kalman.validate();
  if (!(tau_ms > 0.0)) throw Error(ErrorCode::invalid_argument, "tau_ms must be > 0");
  if (!(initial_h_mm > 0.0)) throw Error(ErrorCode::invalid_argument, "initial_h_mm must be > 0");
}

std::vector<geometry::ModuleSpec> reference_robot() { return {geometry::ModuleSpec{}, geometry::ModuleSpec{}}; }

AppConfig default_config() {
  AppConfig cfg;
  cfg.modules = reference_robot();
  return cfg;
}

json module_to_json(const geometry::ModuleSpec& spec) {
  return {{"actuators", spec.actuator_count},     {"radius_mm", spec.radius_mm},
          {"plate_offset_mm", spec.plate_offset_mm}, {"min_len_mm", spec.min_len_mm},
          {"max_len_mm", spec.max_len_mm},         {"tilt_limit_deg", spec.tilt_limit_deg}};
}

geometry::ModuleSpec module_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "module entry must be an object");
  geometry::ModuleSpec spec;
  read_opt(j, "actuators", spec.actuator_count);
  read_opt(j, "radius_mm", spec.radius_mm);
  read_opt(j, "plate_offset_mm", spec.plate_offset_mm);
  read_opt(j, "min_len_mm", spec.min_len_mm);
  read_opt(j, "max_len_mm", spec.max_len_mm);
  read_opt(j, "tilt_limit_deg", spec.tilt_limit_deg);
  spec.validate();
  return spec;
}

json robot_spec_to_json(const std::vector<geometry::ModuleSpec>& modules) {
  json arr = json::array();
  for (const auto& m : modules) arr.push_back(module_to_json(m));
  return {{"modules", arr}};
}

std::vector<geometry::ModuleSpec> robot_spec_from_json(const json& j) {
  if (!j.is_object() || !j.contains("modules") || !j.at("modules").is_array() || j.at("modules").empty())
    throw Error(ErrorCode::invalid_argument, "robot spec needs a non-empty 'modules' array");
  std::vector<geometry::ModuleSpec> out;
  for (const json& m : j.at("modules")) out.push_back(module_from_json(m));
  return out;
}

plant::PlantMode parse_plant_mode(const std::string& s) {
  if (s == "chord") return plant::PlantMode::chord;
  if (s == "cc" || s == "constant_curvature") return plant::PlantMode::constant_curvature;
  throw Error(ErrorCode::invalid_argument, "unknown plant mode '" + s + "' (chord|cc)");
}

std::string plant_mode_name(plant::PlantMode mode) {
  return mode == plant::PlantMode::chord ? "chord" : "constant_curvature";
}

AppConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
  AppConfig cfg = default_config();
  if (j.contains("modules")) cfg.modules = robot_spec_from_json(j);
  if (j.contains("control")) {
    const json& c = j.at("control");
    read_opt(c, "kp", cfg.control.gains.kp);
    read_opt(c, "ki", cfg.control.gains.ki);
    read_opt(c, "kd", cfg.control.gains.kd);
    read_opt(c, "i_max_mm", cfg.control.gains.i_max_mm);
    read_opt(c, "tol_mm", cfg.control.tol_mm);
    read_opt(c, "period_ms", cfg.control.period_ms);
    read_opt(c, "timeout_ms", cfg.control.timeout_ms);
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    read_opt(n, "gauss_sigma_h_mm", cfg.noise.gauss_sigma_h_mm);
    read_opt(n, "gauss_sigma_angle_deg", cfg.noise.gauss_sigma_angle_deg);
    read_opt(n, "spike_prob", cfg.noise.spike_prob);
    read_opt(n, "spike_mag_mm", cfg.noise.spike_mag_mm);
    read_opt(n, "seed", cfg.noise.seed);
  }
  if (j.contains("kalman")) {
    read_opt(j.at("kalman"), "q", cfg.kalman.q);
    read_opt(j.at("kalman"), "r", cfg.kalman.r);
  }
  if (j.contains("plant_mode")) {
    std::string mode;
    read_opt(j, "plant_mode", mode);
    cfg.plant_mode = parse_plant_mode(mode);
  }
  read_opt(j, "initial_h_mm", cfg.initial_h_mm);
  read_opt(j, "tau_ms", cfg.tau_ms);
  cfg.validate();
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  json out = robot_spec_to_json(cfg.modules);
  out["control"] = {{"kp", cfg.control.gains.kp},         {"ki", cfg.control.gains.ki},
                    {"kd", cfg.control.gains.kd},         {"i_max_mm", cfg.control.gains.i_max_mm},
                    {"tol_mm", cfg.control.tol_mm},       {"period_ms", cfg.control.period_ms},
                    {"timeout_ms", cfg.control.timeout_ms}};
  out["noise"] = {{"gauss_sigma_h_mm", cfg.noise.gauss_sigma_h_mm},
                  {"gauss_sigma_angle_deg", cfg.noise.gauss_sigma_angle_deg},
                  {"spike_prob", cfg.noise.spike_prob},
                  {"spike_mag_mm", cfg.noise.spike_mag_mm},
                  {"seed", cfg.noise.seed}};
  out["kalman"] = {{"q", cfg.kalman.q}, {"r", cfg.kalman.r}};
  out["plant_mode"] = cfg.plant_mode == plant::PlantMode::chord ? "chord" : "cc";
  out["initial_h_mm"] = cfg.initial_h_mm;
  out["tau_ms"] = cfg.tau_ms;
  return out;
}

AppConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, "config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace softteleop::config
