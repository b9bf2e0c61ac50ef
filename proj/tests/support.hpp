#pragma once

#include <cmath>
#include <random>

#include "vislio/geometry.hpp"

namespace vislio::testing {

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return Vec3(u(rng), u(rng), u(rng)) * scale;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

// Axis-angle vector with norm drawn uniformly below max_angle.
inline Vec3 random_rotvec(std::mt19937_64& rng, double max_angle) {
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return random_unit(rng) * u(rng);
}

inline Pose random_pose(std::mt19937_64& rng, double max_t = 5.0, double max_angle = 3.0) {
  return Pose(so3_exp(random_rotvec(rng, max_angle)), random_vec(rng, max_t));
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace vislio::testing
