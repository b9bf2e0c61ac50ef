#include "vislio/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace vislio {

namespace {

constexpr double kSmallAngle = 1e-8;

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Rotation Rotation::about_x(double angle) { return so3_exp(Vec3(angle, 0.0, 0.0)); }
Rotation Rotation::about_y(double angle) { return so3_exp(Vec3(0.0, angle, 0.0)); }
Rotation Rotation::about_z(double angle) { return so3_exp(Vec3(0.0, 0.0, angle)); }

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q(m_);
  q.normalize();
  return q;
}

Rotation Rotation::inverse() const {
  Rotation r(Mat3(m_.transpose()));
  r.composes_ = composes_;
  return r;
}

Rotation Rotation::normalized() const { return Rotation(project_to_so3(m_)); }

Rotation Rotation::operator*(const Rotation& other) const {
  Rotation r(Mat3(m_ * other.m_));
  r.composes_ = std::max(composes_, other.composes_) + 1;
  if (r.composes_ >= kRenormalizeEvery) {
    r = r.normalized();
  }
  return r;
}

Rotation so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double a;
  double b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Rotation(Mat3(Mat3::Identity() + a * w + b * w * w));
}

Vec3 so3_log(const Rotation& r) {
  // Quaternion route: atan2 stays well conditioned over the whole [0, pi] range.
  Eigen::Quaterniond q = r.quaternion();
  if (q.w() < 0.0) {
    q.coeffs() *= -1.0;
  }
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // theta ~= 2 s, direction from v; first-order is exact to 1e-16 here.
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return theta * v / s;
}

Mat3 so3_right_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * w + w * w / 6.0;
  }
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * w +
         (theta - std::sin(theta)) / (theta2 * theta) * w * w;
}

Mat3 so3_right_jacobian_inverse(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * w + w * w / 12.0;
  }
  return Mat3::Identity() + 0.5 * w +
         (1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta))) * w * w;
}

Rotation slerp(const Rotation& a, const Rotation& b, double s) {
  const Vec3 delta = so3_log(a.inverse() * b);
  return a * so3_exp(s * delta);
}

double rotation_angle(const Rotation& r) { return so3_log(r).norm(); }

Pose Pose::inverse() const {
  const Rotation rt = rotation.inverse();
  return Pose(rt, -(rt * translation));
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation * other.rotation, rotation * other.translation + translation);
}

Eigen::Isometry3d Pose::isometry() const {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = rotation.matrix();
  iso.translation() = translation;
  return iso;
}

Pose pose_compose(const Pose& a, const Pose& b) { return a * b; }
Pose pose_inverse(const Pose& a) { return a.inverse(); }
Vec3 transform_point(const Pose& a, const Vec3& p) { return a * p; }

Pose interpolate(const Pose& a, const Pose& b, double s) {
  return Pose(slerp(a.rotation, b.rotation, s),
              (1.0 - s) * a.translation + s * b.translation);
}

Pose retract_left(const Pose& pose, const Vec6& xi) {
  const Rotation dr = so3_exp(xi.head<3>());
  return Pose(dr * pose.rotation, dr * pose.translation + xi.tail<3>());
}

PoseDistance pose_distance(const Pose& a, const Pose& b) {
  PoseDistance d;
  d.translation = (a.translation - b.translation).norm();
  d.rotation = rotation_angle(a.rotation.inverse() * b.rotation);
  return d;
}

}  // namespace vislio
