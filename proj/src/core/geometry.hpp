#pragma once

// Kinematic model of a stack of parallel-actuator modules.
//
// Each module is a base plate, n extensible actuators whose base ends sit on
// a circle of radius L, and a top plate. The top plate pivots about its own
// center, which always sits at the module height h above the base center
// (mean actuator height). Module i+1 starts a distance d along the top-plate
// normal of module i.
//
// Units: millimetres and radians.

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace softteleop::geometry {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
  friend Vec3 operator*(const Vec3& v, double s) { return s * v; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }

  double operator()(int row, int col) const { return m[static_cast<std::size_t>(row * 3 + col)]; }
  double& operator()(int row, int col) { return m[static_cast<std::size_t>(row * 3 + col)]; }

  friend Mat3 operator*(const Mat3& a, const Mat3& b);
  friend Vec3 operator*(const Mat3& a, const Vec3& v);
  friend bool operator==(const Mat3&, const Mat3&) = default;

  Mat3 transposed() const;
  double determinant() const;
  Vec3 column(int col) const { return {(*this)(0, col), (*this)(1, col), (*this)(2, col)}; }
};

/// Solves a * x = b by Gaussian elimination with partial pivoting. Throws on a
/// singular matrix.
Vec3 solve(const Mat3& a, const Vec3& b);

struct ModuleSpec {
  int actuator_count = 3;
  double radius_mm = 15.0;        // circumradius L of the actuator polygon
  double plate_offset_mm = 2.5;   // d: top plate center to next module's base center
  double min_len_mm = 30.0;
  double max_len_mm = 60.0;
  double tilt_limit_deg = 10.0;

  /// Throws softteleop::Error(invalid_argument) naming the violated field.
  void validate() const;
  double tilt_limit_rad() const { return tilt_limit_deg * M_PI / 180.0; }
  friend bool operator==(const ModuleSpec&, const ModuleSpec&) = default;
};

struct ModuleReading {
  double h_mm = 0.0;
  double phi_rad = 0.0;    // about local Y (applied second)
  double theta_rad = 0.0;  // about local X (applied first)

  void validate() const;
  friend bool operator==(const ModuleReading&, const ModuleReading&) = default;
};

struct ModulePose {
  Vec3 base_origin;
  Mat3 rotation_local;
  Mat3 rotation_global;
  std::vector<Vec3> base_vertices;
  std::vector<Vec3> top_vertices;
  Vec3 top_center;
  Vec3 top_normal;
  std::vector<double> actuator_lengths_mm;
};

struct RobotPose {
  std::vector<ModulePose> modules;
  Vec3 end_effector;
};

struct CenterNormal {
  Vec3 center;
  Vec3 normal;
};

struct ClampResult {
  std::vector<double> lengths_mm;
  std::vector<bool> saturated;

  bool any_saturated() const;
};

/// Actuator base points in the module frame: n vertices on a circle of radius
/// L in the z=0 plane, vertex k at polar angle 2*pi*k/n.
std::vector<Vec3> base_vertices(const ModuleSpec& spec);

/// Top-plate rotation from the IMU angles. The entries are
///   [ cos(phi)  sin(phi)sin(theta)  sin(phi)cos(theta) ]
///   [ 0         cos(theta)          -sin(theta)        ]
///   [ -sin(phi) cos(phi)sin(theta)  cos(phi)cos(theta) ]
/// which is Ry(phi) * Rx(theta).
Mat3 rotation_from_imu(double phi_rad, double theta_rad);

std::vector<Vec3> top_vertices(const ModuleSpec& spec, const ModuleReading& reading);
std::vector<double> actuator_lengths(const ModuleSpec& spec, const ModuleReading& reading);
CenterNormal platform_center_normal(const ModuleSpec& spec, const ModuleReading& reading);

/// top_center + d * top_normal. Throws if the normal is not unit within 1e-6.
Vec3 next_base_origin(const Vec3& top_center, const Vec3& top_normal, double d_mm);

/// Cumulative left-to-right products of the per-module rotations.
std::vector<Mat3> compose_global(std::span<const Mat3> local_rotations);

RobotPose forward_chain(std::span<const ModuleSpec> specs, std::span<const ModuleReading> readings);

ClampResult clamp_lengths(const ModuleSpec& spec, std::span<const double> lengths_mm);

inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / M_PI; }

}  // namespace softteleop::geometry
