#include "observer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace softteleop::observer {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, int index) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value))
    throw ParseError(index, "field " + std::to_string(index) + ": not a finite number: '" +
                                std::string(field) + "'");
  return value;
}

}  // namespace

ParseError::ParseError(int field, const std::string& what) : Error(ErrorCode::parse_error, what), field_(field) {}

double quantize(double value) { return std::round(value * 1e4) / 1e4; }

std::string format_decimal(double value) {
  double q = quantize(value);
  if (q == 0.0) q = 0.0;  // drop the sign of negative zero
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.4f", q);
  std::string s(buf, static_cast<std::size_t>(n));
  while (s.size() > 2 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

SensorFrame parse_sensor_line(std::string_view line) {
  const std::vector<std::string_view> fields = split_fields(trim(line));
  if (fields[0] != "S") throw ParseError(1, "field 1: expected tag 'S'");
  if (fields.size() < 5 || (fields.size() - 2) % 3 != 0)
    throw ParseError(static_cast<int>(fields.size()),
                     "sensor line needs 2 + 3k fields, got " + std::to_string(fields.size()));

  SensorFrame frame;
  {
    const std::string_view f = fields[1];
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), frame.t_ms);
    if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size())
      throw ParseError(2, "field 2: bad timestamp '" + std::string(f) + "'");
  }
  const std::size_t modules = (fields.size() - 2) / 3;
  frame.readings.reserve(modules);
  for (std::size_t m = 0; m < modules; ++m) {
    const int base = static_cast<int>(2 + 3 * m);  // 0-based index of h
    const double h = parse_number(fields[base], base + 1);
    const double phi = parse_number(fields[base + 1], base + 2);
    const double theta = parse_number(fields[base + 2], base + 3);
    if (h <= 0.0) throw ParseError(base + 1, "field " + std::to_string(base + 1) + ": height must be > 0");
    if (std::abs(phi) >= 90.0) throw ParseError(base + 2, "field " + std::to_string(base + 2) + ": |phi| >= 90");
    if (std::abs(theta) >= 90.0)
      throw ParseError(base + 3, "field " + std::to_string(base + 3) + ": |theta| >= 90");
    frame.readings.push_back({h, geometry::deg_to_rad(phi), geometry::deg_to_rad(theta)});
  }
  return frame;
}

std::string format_sensor_line(const SensorFrame& frame) {
  std::string out = "S," + std::to_string(frame.t_ms);
  for (const ModuleReading& r : frame.readings) {
    out += ',';
    out += format_decimal(r.h_mm);
    out += ',';
    out += format_decimal(geometry::rad_to_deg(r.phi_rad));
    out += ',';
    out += format_decimal(geometry::rad_to_deg(r.theta_rad));
  }
  out += '\n';
  return out;
}

std::vector<double> parse_command_line(std::string_view line) {
  const std::vector<std::string_view> fields = split_fields(trim(line));
  if (fields[0] != "C") throw ParseError(1, "field 1: expected tag 'C'");
  if (fields.size() < 2) throw ParseError(1, "command line carries no lengths");
  std::vector<double> out;
  out.reserve(fields.size() - 1);
  for (std::size_t i = 1; i < fields.size(); ++i) out.push_back(parse_number(fields[i], static_cast<int>(i + 1)));
  return out;
}

std::string format_command_line(std::span<const double> lengths_mm) {
  std::string out = "C";
  for (double l : lengths_mm) {
    out += ',';
    out += format_decimal(l);
  }
  out += '\n';
  return out;
}

Observer::Observer(std::vector<ModuleSpec> specs, filtering::KalmanParams params)
    : specs_(std::move(specs)), params_(params) {
  if (specs_.empty()) throw Error(ErrorCode::invalid_argument, "observer needs at least one module");
  for (const ModuleSpec& s : specs_) s.validate();
  // x0 and p0 are replaced per channel on the first measurement.
  filtering::KalmanParams check = params_;
  check.validate();
}

const std::vector<ModuleReading>& Observer::ingest(const SensorFrame& frame) {
  if (frame.readings.size() != specs_.size())
    throw Error(ErrorCode::count_mismatch, "frame carries " + std::to_string(frame.readings.size()) +
                                               " modules, observer expects " + std::to_string(specs_.size()));
  if (last_t_ms_ && frame.t_ms < *last_t_ms_)
    throw Error(ErrorCode::invalid_argument, "frame timestamp went backwards");
  for (const ModuleReading& r : frame.readings) r.validate();

  if (filters_.empty()) {
    // First measurement seeds each channel: x0 = z, p0 = r.
    filters_.reserve(specs_.size());
    for (const ModuleReading& r : frame.readings) filters_.push_back({r.h_mm, params_.r});
  } else {
    for (std::size_t i = 0; i < filters_.size(); ++i)
      filters_[i] = filtering::kalman_step(filters_[i], params_, frame.readings[i].h_mm);
  }

  filtered_ = frame.readings;
  for (std::size_t i = 0; i < filtered_.size(); ++i) filtered_[i].h_mm = filters_[i].x;
  last_t_ms_ = frame.t_ms;
  return filtered_;
}

const RobotPose& Observer::estimate() {
  if (!last_t_ms_) throw Error(ErrorCode::no_estimate, "estimate requested before any sensor frame");
  last_pose_ = geometry::forward_chain(specs_, filtered_);
  return *last_pose_;
}

bool Observer::is_stale(std::int64_t now_ms, std::int64_t period_ms) const {
  return !last_t_ms_ || now_ms - *last_t_ms_ > 5 * period_ms;
}

}  // namespace softteleop::observer
