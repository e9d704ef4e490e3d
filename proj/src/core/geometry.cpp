#include "geometry.hpp"

#include <string>

#include "error.hpp"

namespace softteleop::geometry {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

bool is_unit(const Vec3& v, double tol) { return std::abs(v.norm() - 1.0) <= tol; }

}  // namespace

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
  return out;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
          a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
          a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

Mat3 Mat3::transposed() const {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = (*this)(j, i);
  return out;
}

double Mat3::determinant() const {
  const Mat3& a = *this;
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Vec3 solve(const Mat3& a, const Vec3& b) {
  double m[3][4] = {{a(0, 0), a(0, 1), a(0, 2), b.x}, {a(1, 0), a(1, 1), a(1, 2), b.y}, {a(2, 0), a(2, 1), a(2, 2), b.z}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
    if (std::abs(m[pivot][col]) < 1e-300) throw Error(ErrorCode::invalid_argument, "solve: singular matrix");
    if (pivot != col)
      for (int k = 0; k < 4; ++k) std::swap(m[col][k], m[pivot][k]);
    for (int row = col + 1; row < 3; ++row) {
      const double f = m[row][col] / m[col][col];
      for (int k = col; k < 4; ++k) m[row][k] -= f * m[col][k];
    }
  }
  double x[3];
  for (int row = 2; row >= 0; --row) {
    double acc = m[row][3];
    for (int k = row + 1; k < 3; ++k) acc -= m[row][k] * x[k];
    x[row] = acc / m[row][row];
  }
  return {x[0], x[1], x[2]};
}

void ModuleSpec::validate() const {
  require(actuator_count >= 3, "actuators must be >= 3");
  require(std::isfinite(radius_mm) && radius_mm > 0.0, "radius_mm must be > 0");
  require(std::isfinite(plate_offset_mm) && plate_offset_mm >= 0.0, "plate_offset_mm must be >= 0");
  require(std::isfinite(min_len_mm) && min_len_mm > 0.0, "min_len_mm must be > 0");
  require(std::isfinite(max_len_mm) && min_len_mm < max_len_mm, "min_len_mm must be < max_len_mm");
  require(std::isfinite(tilt_limit_deg) && tilt_limit_deg > 0.0 && tilt_limit_deg < 90.0,
          "tilt_limit_deg must be in (0, 90)");
}

void ModuleReading::validate() const {
  require(std::isfinite(h_mm) && h_mm > 0.0, "h_mm must be > 0");
  require(std::isfinite(phi_rad) && std::abs(phi_rad) < M_PI / 2, "|phi| must be < 90 deg");
  require(std::isfinite(theta_rad) && std::abs(theta_rad) < M_PI / 2, "|theta| must be < 90 deg");
}

bool ClampResult::any_saturated() const {
  for (bool s : saturated)
    if (s) return true;
  return false;
}

std::vector<Vec3> base_vertices(const ModuleSpec& spec) {
  const double L = spec.radius_mm;
  if (spec.actuator_count == 3) {
    const double s3 = std::sqrt(3.0);
    return {{L, 0.0, 0.0}, {-L / 2.0, s3 * L / 2.0, 0.0}, {-L / 2.0, -s3 * L / 2.0, 0.0}};
  }
  const int n = spec.actuator_count;
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    // Quarter turns are snapped so axis-aligned vertices come out exact.
    if ((4 * k) % n == 0) {
      static constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
      static constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
      const int quarter = 4 * k / n;
      out.push_back({L * kCos[quarter], L * kSin[quarter], 0.0});
    } else {
      const double angle = 2.0 * M_PI * k / n;
      out.push_back({L * std::cos(angle), L * std::sin(angle), 0.0});
    }
  }
  return out;
}

Mat3 rotation_from_imu(double phi_rad, double theta_rad) {
  const double cp = std::cos(phi_rad), sp = std::sin(phi_rad);
  const double ct = std::cos(theta_rad), st = std::sin(theta_rad);
  return Mat3{{cp, sp * st, sp * ct,
               0.0, ct, -st,
               -sp, cp * st, cp * ct}};
}

std::vector<Vec3> top_vertices(const ModuleSpec& spec, const ModuleReading& reading) {
  const Mat3 r = rotation_from_imu(reading.phi_rad, reading.theta_rad);
  const Vec3 lift{0.0, 0.0, reading.h_mm};
  std::vector<Vec3> out = base_vertices(spec);
  for (Vec3& v : out) v = r * v + lift;
  return out;
}

std::vector<double> actuator_lengths(const ModuleSpec& spec, const ModuleReading& reading) {
  const std::vector<Vec3> base = base_vertices(spec);
  const std::vector<Vec3> top = top_vertices(spec, reading);
  std::vector<double> out(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) out[k] = (top[k] - base[k]).norm();
  return out;
}

CenterNormal platform_center_normal(const ModuleSpec&, const ModuleReading& reading) {
  const Mat3 r = rotation_from_imu(reading.phi_rad, reading.theta_rad);
  return {{0.0, 0.0, reading.h_mm}, r.column(2)};
}

Vec3 next_base_origin(const Vec3& top_center, const Vec3& top_normal, double d_mm) {
  require(is_unit(top_normal, 1e-6), "top_normal must have unit norm");
  return top_center + d_mm * top_normal;
}

std::vector<Mat3> compose_global(std::span<const Mat3> local_rotations) {
  std::vector<Mat3> out;
  out.reserve(local_rotations.size());
  Mat3 acc = Mat3::identity();
  for (std::size_t i = 0; i < local_rotations.size(); ++i) {
    acc = i == 0 ? local_rotations[0] : acc * local_rotations[i];
    out.push_back(acc);
  }
  return out;
}

RobotPose forward_chain(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings) {
  if (specs.size() != readings.size() || specs.empty())
    throw Error(ErrorCode::count_mismatch, "forward_chain: need one reading per module (got " +
                                               std::to_string(readings.size()) + " readings for " +
                                               std::to_string(specs.size()) + " modules)");

  std::vector<Mat3> local(readings.size());
  for (std::size_t i = 0; i < readings.size(); ++i)
    local[i] = rotation_from_imu(readings[i].phi_rad, readings[i].theta_rad);
  const std::vector<Mat3> global = compose_global(local);

  RobotPose pose;
  pose.modules.reserve(specs.size());
  Vec3 origin{};
  Mat3 frame = Mat3::identity();  // global rotation of the current module's base
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ModuleSpec& spec = specs[i];
    const ModuleReading& reading = readings[i];
    ModulePose mp;
    mp.base_origin = origin;
    mp.rotation_local = local[i];
    mp.rotation_global = global[i];

    const std::vector<Vec3> base_local = base_vertices(spec);
    mp.base_vertices.reserve(base_local.size());
    mp.top_vertices.reserve(base_local.size());
    mp.actuator_lengths_mm.reserve(base_local.size());
    const Vec3 lift{0.0, 0.0, reading.h_mm};
    for (const Vec3& b : base_local) {
      const Vec3 top_local = local[i] * b + lift;
      mp.base_vertices.push_back(origin + frame * b);
      mp.top_vertices.push_back(origin + frame * top_local);
      mp.actuator_lengths_mm.push_back((top_local - b).norm());
    }
    mp.top_center = origin + frame * lift;
    mp.top_normal = global[i].column(2);

    origin = mp.top_center + spec.plate_offset_mm * mp.top_normal;
    frame = global[i];
    pose.modules.push_back(std::move(mp));
  }
  pose.end_effector = pose.modules.back().top_center;
  return pose;
}

ClampResult clamp_lengths(const ModuleSpec& spec, std::span<const double> lengths_mm) {
  ClampResult out;
  out.lengths_mm.reserve(lengths_mm.size());
  out.saturated.reserve(lengths_mm.size());
  for (double l : lengths_mm) {
    require(std::isfinite(l), "clamp_lengths: non-finite length");
    const bool low = l < spec.min_len_mm, high = l > spec.max_len_mm;
    out.lengths_mm.push_back(low ? spec.min_len_mm : high ? spec.max_len_mm : l);
    out.saturated.push_back(low || high);
  }
  return out;
}

}  // namespace softteleop::geometry
