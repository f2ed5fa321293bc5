#pragma once

// Small fixed-size geometry used by the simulator and the observation vector:
// 3-vectors and Hamilton unit quaternions (w, x, y, z), body-to-world convention.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sdflyer {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(dot(*this)); }
  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  // Component-wise product; used for diagonal inertia.
  constexpr Vec3 hadamard(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Unit quaternion. Every constructor path from raw components normalizes.
class UnitQuat {
 public:
  constexpr UnitQuat() = default;

  static UnitQuat normalized(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    UnitQuat q;
    q.w_ = w / n;
    q.x_ = x / n;
    q.y_ = y / n;
    q.z_ = z / n;
    return q;
  }

  static UnitQuat identity() { return {}; }

  // Rotation of `angle` radians about `axis` (need not be unit length).
  static UnitQuat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 u = axis / axis.norm();
    const double s = std::sin(0.5 * angle);
    return normalized(std::cos(0.5 * angle), u.x * s, u.y * s, u.z * s);
  }

  // Exponential map of a rotation vector (axis * angle).
  static UnitQuat from_rotvec(const Vec3& r) {
    const double angle = r.norm();
    if (angle < 1e-12) return normalized(1.0, 0.5 * r.x, 0.5 * r.y, 0.5 * r.z);
    return from_axis_angle(r, angle);
  }

  constexpr double w() const { return w_; }
  constexpr double x() const { return x_; }
  constexpr double y() const { return y_; }
  constexpr double z() const { return z_; }
  constexpr Vec3 vec() const { return {x_, y_, z_}; }
  double norm() const { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

  UnitQuat operator*(const UnitQuat& o) const {
    return normalized(w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                      w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                      w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                      w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_);
  }

  constexpr UnitQuat inverse() const { return UnitQuat(w_, -x_, -y_, -z_); }
  constexpr UnitQuat operator-() const { return UnitQuat(-w_, -x_, -y_, -z_); }
  constexpr bool operator==(const UnitQuat&) const = default;

  // Same rotation with w >= 0.
  constexpr UnitQuat canonical() const { return w_ < 0.0 ? -*this : *this; }

  // Rotate a body-frame vector into the world frame: q v q*.
  Vec3 rotate(const Vec3& v) const {
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + w_ * t + u.cross(t);
  }
  Vec3 rotate_inverse(const Vec3& v) const { return inverse().rotate(v); }

  // Logarithm map: rotation vector with angle in [0, pi].
  Vec3 to_rotvec() const {
    const UnitQuat c = canonical();
    const Vec3 u = c.vec();
    const double s = u.norm();
    if (s < 1e-12) return u * 2.0;
    const double angle = 2.0 * std::atan2(s, c.w_);
    return u * (angle / s);
  }

  bool finite() const {
    return std::isfinite(w_) && std::isfinite(x_) && std::isfinite(y_) && std::isfinite(z_);
  }

 private:
  constexpr UnitQuat(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

// Shortest-path rotation vector of goal * current^-1 (world-frame error).
inline Vec3 quat_error_rotvec(const UnitQuat& current, const UnitQuat& goal) {
  if (current == goal || current == -goal) return {};
  return (goal * current.inverse()).to_rotvec();
}

// Total rotation angle between two orientations, degrees in [0, 180].
inline double quat_angle_deg(const UnitQuat& current, const UnitQuat& goal) {
  const UnitQuat err = goal * current.inverse();
  return 2.0 * std::atan2(err.vec().norm(), std::abs(err.w())) * 180.0 / std::numbers::pi;
}

// Advance orientation by a body-frame angular velocity held constant over dt.
inline UnitQuat integrate_quat(const UnitQuat& q, const Vec3& omega, double dt) {
  if (omega == Vec3{}) return q;
  return q * UnitQuat::from_rotvec(omega * dt);
}

}  // namespace sdflyer
