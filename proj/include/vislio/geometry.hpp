#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>

namespace vislio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

Mat3 skew(const Vec3& v);

/// Element of SO(3) stored as an orthonormal matrix.
///
/// Products are re-orthonormalized every kRenormalizeEvery compositions so that
/// long odometry chains do not drift off the manifold.
class Rotation {
 public:
  static constexpr std::uint32_t kRenormalizeEvery = 100;

  Rotation() : m_(Mat3::Identity()) {}

  /// Wraps an (approximately) orthonormal matrix. No projection is done here;
  /// use normalized() for arbitrary input.
  explicit Rotation(const Mat3& m) : m_(m) {}
  explicit Rotation(const Eigen::Quaterniond& q) : m_(q.normalized().toRotationMatrix()) {}

  static Rotation identity() { return Rotation(); }
  static Rotation about_x(double angle);
  static Rotation about_y(double angle);
  static Rotation about_z(double angle);

  const Mat3& matrix() const { return m_; }
  Eigen::Quaterniond quaternion() const;

  Rotation inverse() const;
  Rotation normalized() const;

  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& other) const;

  std::uint32_t composes_since_normalize() const { return composes_; }

 private:
  Mat3 m_;
  std::uint32_t composes_ = 0;
};

/// Rodrigues exponential; Taylor branch below 1e-8 rad.
Rotation so3_exp(const Vec3& omega);

/// Axis-angle logarithm with result norm in [0, pi].
Vec3 so3_log(const Rotation& r);

/// Right Jacobian of SO(3) and its inverse.
Mat3 so3_right_jacobian(const Vec3& omega);
Mat3 so3_right_jacobian_inverse(const Vec3& omega);

/// Geodesic interpolation, s in [0, 1].
Rotation slerp(const Rotation& a, const Rotation& b, double s);

double rotation_angle(const Rotation& r);

/// Rigid motion; maps points from the child frame into the parent frame.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Eigen::Isometry3d isometry() const;
};

Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);
Vec3 transform_point(const Pose& a, const Vec3& p);

/// Slerp on rotation, linear on translation.
Pose interpolate(const Pose& a, const Pose& b, double s);

/// Left-perturbed retraction: Exp(xi) * pose with xi = (dtheta, dt).
Pose retract_left(const Pose& pose, const Vec6& xi);

/// Translation distance and rotation angle between two poses.
struct PoseDistance {
  double translation = 0.0;
  double rotation = 0.0;
};
PoseDistance pose_distance(const Pose& a, const Pose& b);

}  // namespace vislio
