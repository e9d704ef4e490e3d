#include "plant.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "observer.hpp"

namespace softteleop::plant {

using geometry::Mat3;

namespace {

constexpr int kMaxIterations = 100;
constexpr double kFdStep = 1e-6;

struct Params3 {
  double v[3];  // phi, theta, h
};

ModuleReading to_reading(const Params3& p) { return {p.v[2], p.v[0], p.v[1]}; }

double cost(const ModuleSpec& spec, const Params3& p, std::span<const double> target, std::vector<double>& residual) {
  const std::vector<double> l = geometry::actuator_lengths(spec, to_reading(p));
  double sum = 0.0;
  for (std::size_t k = 0; k < l.size(); ++k) {
    residual[k] = l[k] - target[k];
    sum += residual[k] * residual[k];
  }
  return sum;
}

void project(const ModuleSpec& spec, Params3& p) {
  const double lim = spec.tilt_limit_rad();
  p.v[0] = std::clamp(p.v[0], -lim, lim);
  p.v[1] = std::clamp(p.v[1], -lim, lim);
  p.v[2] = std::max(p.v[2], 1e-6);
}

}  // namespace

void NoiseModel::validate() const {
  if (!(gauss_sigma_h_mm >= 0.0) || !(gauss_sigma_angle_deg >= 0.0) || !(spike_mag_mm >= 0.0) ||
      !(spike_prob >= 0.0 && spike_prob <= 1.0))
    throw Error(ErrorCode::invalid_argument, "noise model needs sigmas >= 0 and spike_prob in [0, 1]");
}

InverseResult inverse_module(const ModuleSpec& spec, std::span<const double> lengths_mm, const ModuleReading* seed) {
  spec.validate();
  const std::size_t n = static_cast<std::size_t>(spec.actuator_count);
  if (lengths_mm.size() != n)
    throw Error(ErrorCode::count_mismatch, "inverse_module: expected " + std::to_string(n) + " lengths, got " +
                                               std::to_string(lengths_mm.size()));
  double mean = 0.0;
  for (double l : lengths_mm) {
    if (!std::isfinite(l) || l < spec.min_len_mm - 1e-9 || l > spec.max_len_mm + 1e-9)
      throw Error(ErrorCode::invalid_argument, "inverse_module: length outside elongation bounds");
    mean += l;
  }
  mean /= static_cast<double>(n);

  Params3 p = seed ? Params3{{seed->phi_rad, seed->theta_rad, seed->h_mm}} : Params3{{0.0, 0.0, mean}};
  project(spec, p);

  std::vector<double> r(n), r_plus(n), r_minus(n), r_trial(n);
  std::vector<std::array<double, 3>> jac(n);
  double current = cost(spec, p, lengths_mm, r);
  double damping = 1e-6;

  InverseResult out;
  for (out.iterations = 0; out.iterations < kMaxIterations; ++out.iterations) {
    if (current < 1e-24) {
      out.converged = true;
      break;
    }
    for (int j = 0; j < 3; ++j) {
      Params3 plus = p, minus = p;
      plus.v[j] += kFdStep;
      minus.v[j] -= kFdStep;
      cost(spec, plus, lengths_mm, r_plus);
      cost(spec, minus, lengths_mm, r_minus);
      for (std::size_t k = 0; k < n; ++k) jac[k][static_cast<std::size_t>(j)] = (r_plus[k] - r_minus[k]) / (2 * kFdStep);
    }
    Mat3 jtj;
    geometry::Vec3 jtr;
    for (std::size_t k = 0; k < n; ++k) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) jtj(a, b) += jac[k][static_cast<std::size_t>(a)] * jac[k][static_cast<std::size_t>(b)];
      jtr.x += jac[k][0] * r[k];
      jtr.y += jac[k][1] * r[k];
      jtr.z += jac[k][2] * r[k];
    }

    bool accepted = false;
    double step_norm = 0.0;
    while (damping < 1e12) {
      Mat3 a = jtj;
      for (int d = 0; d < 3; ++d) a(d, d) += damping * (1.0 + jtj(d, d));
      const geometry::Vec3 delta = geometry::solve(a, -1.0 * jtr);
      Params3 trial{{p.v[0] + delta.x, p.v[1] + delta.y, p.v[2] + delta.z}};
      project(spec, trial);
      const double trial_cost = cost(spec, trial, lengths_mm, r_trial);
      if (trial_cost <= current) {
        step_norm = std::sqrt((trial.v[0] - p.v[0]) * (trial.v[0] - p.v[0]) +
                              (trial.v[1] - p.v[1]) * (trial.v[1] - p.v[1]) +
                              (trial.v[2] - p.v[2]) * (trial.v[2] - p.v[2]));
        p = trial;
        current = trial_cost;
        r = r_trial;
        damping = std::max(damping * 0.1, 1e-12);
        accepted = true;
        break;
      }
      damping *= 10.0;
    }
    if (!accepted || step_norm < 1e-13) {
      out.converged = true;
      break;
    }
  }

  out.reading = to_reading(p);
  out.residual_rms_mm = std::sqrt(current / static_cast<double>(n));
  out.exact = out.residual_rms_mm <= 1e-6;
  return out;
}

ModuleReading on_wire_grid(const ModuleReading& r) {
  using geometry::deg_to_rad;
  using geometry::rad_to_deg;
  return {observer::quantize(r.h_mm), deg_to_rad(observer::quantize(rad_to_deg(r.phi_rad))),
          deg_to_rad(observer::quantize(rad_to_deg(r.theta_rad)))};
}

PlantState rest_state(std::span<const ModuleSpec> specs, double rest_h_mm, PlantMode mode) {
  PlantState s;
  s.mode = mode;
  for (const ModuleSpec& spec : specs) {
    spec.validate();
    const ModuleReading r = on_wire_grid({std::clamp(rest_h_mm, spec.min_len_mm, spec.max_len_mm), 0.0, 0.0});
    s.truth.push_back(r);
    s.commanded.push_back(r);
  }
  return s;
}

std::vector<double> chain_lengths(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings) {
  std::vector<double> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::vector<double> l = geometry::actuator_lengths(specs[i], readings[i]);
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

PlantState step(std::span<const ModuleSpec> specs, const PlantState& state, double dt_ms,
                std::span<const double> commanded_lengths_mm, double tau_ms) {
  if (!(dt_ms > 0.0)) throw Error(ErrorCode::invalid_argument, "plant step needs dt_ms > 0");
  if (!(tau_ms > 0.0)) throw Error(ErrorCode::invalid_argument, "plant step needs tau_ms > 0");
  std::size_t total = 0;
  for (const ModuleSpec& s : specs) total += static_cast<std::size_t>(s.actuator_count);
  if (commanded_lengths_mm.size() != total)
    throw Error(ErrorCode::count_mismatch, "plant step: expected " + std::to_string(total) + " lengths, got " +
                                               std::to_string(commanded_lengths_mm.size()));

  PlantState next = state;
  const double blend = 1.0 - std::exp(-dt_ms / tau_ms);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(specs[i].actuator_count);
    const InverseResult inv = inverse_module(specs[i], commanded_lengths_mm.subspan(offset, n), &state.commanded[i]);
    offset += n;
    next.commanded[i] = inv.reading;
    const ModuleReading& x = state.truth[i];
    const ModuleReading& c = inv.reading;
    next.truth[i] = on_wire_grid({x.h_mm + blend * (c.h_mm - x.h_mm), x.phi_rad + blend * (c.phi_rad - x.phi_rad),
                                  x.theta_rad + blend * (c.theta_rad - x.theta_rad)});
  }
  next.time_ms = state.time_ms + static_cast<std::int64_t>(std::llround(dt_ms));
  return next;
}

Vec3 constant_curvature_tip(const ModuleReading& reading) {
  const Vec3 n = geometry::rotation_from_imu(reading.phi_rad, reading.theta_rad).column(2);
  const double lateral = std::hypot(n.x, n.y);
  const double alpha = std::atan2(lateral, n.z);
  const double s = reading.h_mm;
  // (1 - cos a) / (a sin a) and sin(a) / a, with series forms near a = 0.
  double bend_per_sin, axial;
  if (alpha < 1e-4) {
    const double a2 = alpha * alpha;
    bend_per_sin = 0.5 + a2 / 24.0;
    axial = 1.0 - a2 / 6.0;
  } else {
    bend_per_sin = (1.0 - std::cos(alpha)) / (alpha * std::sin(alpha));
    axial = std::sin(alpha) / alpha;
  }
  return {s * bend_per_sin * n.x, s * bend_per_sin * n.y, s * axial};
}

RobotPose ground_truth(std::span<const ModuleSpec> specs, const PlantState& state) {
  RobotPose pose = geometry::forward_chain(specs, state.truth);
  if (state.mode == PlantMode::chord) return pose;

  // Same rotations and chaining, but each top center sits at the arc tip.
  Vec3 origin{};
  Mat3 frame = Mat3::identity();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    geometry::ModulePose& mp = pose.modules[i];
    const Vec3 tip_local = constant_curvature_tip(state.truth[i]);
    const std::vector<Vec3> base_local = geometry::base_vertices(specs[i]);
    mp.base_origin = origin;
    for (std::size_t k = 0; k < base_local.size(); ++k) {
      const Vec3 top_local = tip_local + mp.rotation_local * base_local[k];
      mp.base_vertices[k] = origin + frame * base_local[k];
      mp.top_vertices[k] = origin + frame * top_local;
      mp.actuator_lengths_mm[k] = (top_local - base_local[k]).norm();
    }
    mp.top_center = origin + frame * tip_local;
    origin = mp.top_center + specs[i].plate_offset_mm * mp.top_normal;
    frame = mp.rotation_global;
  }
  pose.end_effector = pose.modules.back().top_center;
  return pose;
}

SensorNoise::SensorNoise(NoiseModel model) : model_(model), rng_(model.seed) { model_.validate(); }

std::vector<ModuleReading> SensorNoise::noisy_readings(const PlantState& state) {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<ModuleReading> out;
  out.reserve(state.truth.size());
  for (const ModuleReading& t : state.truth) {
    // Fixed draw order keeps the stream reproducible for any parameter set.
    const double g_h = unit(rng_);
    const double u_spike = uniform(rng_);
    const double u_sign = uniform(rng_);
    const double g_phi = unit(rng_);
    const double g_theta = unit(rng_);
    double h = t.h_mm + model_.gauss_sigma_h_mm * g_h;
    if (u_spike < model_.spike_prob) h += u_sign < 0.5 ? -model_.spike_mag_mm : model_.spike_mag_mm;
    const double sigma_angle = geometry::deg_to_rad(model_.gauss_sigma_angle_deg);
    out.push_back({std::max(h, 1e-3), t.phi_rad + sigma_angle * g_phi, t.theta_rad + sigma_angle * g_theta});
  }
  return out;
}

std::string SensorNoise::read_sensors(const PlantState& state) {
  return observer::format_sensor_line({state.time_ms, noisy_readings(state)});
}

Plant::Plant(std::vector<ModuleSpec> specs, NoiseModel noise, PlantMode mode, double rest_h_mm, double tau_ms)
    : specs_(std::move(specs)), noise_(noise), tau_ms_(tau_ms) {
  if (specs_.empty()) throw Error(ErrorCode::invalid_argument, "plant needs at least one module");
  if (!(tau_ms_ > 0.0)) throw Error(ErrorCode::invalid_argument, "plant tau_ms must be > 0");
  state_ = rest_state(specs_, rest_h_mm, mode);
  command_ = chain_lengths(specs_, state_.truth);
}

void Plant::command(std::span<const double> lengths_mm) {
  if (lengths_mm.size() != command_.size())
    throw Error(ErrorCode::count_mismatch, "plant expects " + std::to_string(command_.size()) + " lengths, got " +
                                               std::to_string(lengths_mm.size()));
  std::size_t offset = 0;
  for (const ModuleSpec& spec : specs_) {
    const std::size_t n = static_cast<std::size_t>(spec.actuator_count);
    const geometry::ClampResult c = geometry::clamp_lengths(spec, lengths_mm.subspan(offset, n));
    std::copy(c.lengths_mm.begin(), c.lengths_mm.end(), command_.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += n;
  }
}

void Plant::handle_command_line(std::string_view line) { command(observer::parse_command_line(line)); }

void Plant::advance(double dt_ms) { state_ = step(specs_, state_, dt_ms, command_, tau_ms_); }

std::string Plant::sensor_line() { return noise_.read_sensors(state_); }

RobotPose Plant::ground_truth() const { return plant::ground_truth(specs_, state_); }

}  // namespace softteleop::plant
