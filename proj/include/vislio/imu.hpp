#pragma once

#include <span>
#include <vector>

#include "vislio/geometry.hpp"

namespace vislio {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, body frame (specific force)
};

struct ImuBias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/// Continuous-time noise densities and world gravity.
struct NoiseModel {
  double gyro_noise = 1e-3;    // rad/s/sqrt(Hz)
  double accel_noise = 1e-2;   // m/s^2/sqrt(Hz)
  double gyro_walk = 1e-5;     // rad/s^2/sqrt(Hz)
  double accel_walk = 1e-4;    // m/s^3/sqrt(Hz)
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

struct NavState {
  Rotation rotation;  // world <- body
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  ImuBias bias;
  double t = 0.0;

  Pose pose() const { return Pose(rotation, position); }
};

/// First-order sensitivities of the preintegrated deltas to the bias used
/// during integration.
struct BiasJacobians {
  Mat3 rot_gyro = Mat3::Zero();
  Mat3 vel_gyro = Mat3::Zero();
  Mat3 vel_accel = Mat3::Zero();
  Mat3 pos_gyro = Mat3::Zero();
  Mat3 pos_accel = Mat3::Zero();
};

struct PreintegratedDelta {
  Rotation delta_rotation;
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  double dt_total = 0.0;
  ImuBias bias_ref;
  BiasJacobians jac;
  // Noise covariance of (dtheta, dv, dp) in the frame of the interval start.
  Mat9 covariance = Mat9::Zero();
};

/// Midpoint-rule preintegration of samples[0].t .. samples.back().t.
/// Throws EmptyInterval for fewer than two samples, NonMonotonicTime otherwise
/// when timestamps do not strictly increase.
PreintegratedDelta preintegrate(std::span<const ImuSample> samples, const ImuBias& bias_ref,
                                const NoiseModel& noise);

/// Bias-corrected delta terms for the given bias.
struct CorrectedDelta {
  Rotation rotation;
  Vec3 velocity;
  Vec3 position;
};
CorrectedDelta correct_delta(const PreintegratedDelta& delta, const ImuBias& bias);

NavState predict_state(const NavState& prev, const PreintegratedDelta& delta,
                       const NoiseModel& noise);

struct PreintegrationError {
  Vec3 rotation = Vec3::Zero();  // rad
  Vec3 velocity = Vec3::Zero();  // m/s
  Vec3 position = Vec3::Zero();  // m
  ImuBias bias;                  // curr.bias - prev.bias
};

PreintegrationError preintegration_error(const NavState& prev, const NavState& curr,
                                         const PreintegratedDelta& delta,
                                         const NoiseModel& noise);

/// 15-dim error state ordered (dtheta, dp, dv, dba, dbg) with covariance.
struct ErrorState {
  static constexpr int kTheta = 0;
  static constexpr int kPos = 3;
  static constexpr int kVel = 6;
  static constexpr int kAccelBias = 9;
  static constexpr int kGyroBias = 12;

  Vec15 mean = Vec15::Zero();
  Mat15 covariance = Mat15::Zero();

  Vec3 dtheta() const { return mean.segment<3>(kTheta); }
  Vec3 dp() const { return mean.segment<3>(kPos); }
};

/// Inputs of one error-propagation step. accel and attitude default to zero
/// specific force and identity, which reduces the model to the rotation and
/// position blocks alone.
struct ErrorStepInput {
  Vec3 gyro = Vec3::Zero();   // bias-corrected body rate
  Vec3 accel = Vec3::Zero();  // bias-corrected specific force
  Rotation attitude;
  double dt = 0.0;
};

ErrorState propagate_error(const ErrorState& prev, const ErrorStepInput& step,
                           const NoiseModel& noise);
ErrorState propagate_error(const ErrorState& prev, const Vec3& gyro, double dt,
                           const NoiseModel& noise);

/// Seed for the error chain at a keyframe: the preintegration error as mean and
/// the preintegration covariance as spread.
ErrorState seed_error(const PreintegrationError& err, const PreintegratedDelta& delta);

struct PoseErrorNorms {
  double dp_norm = 0.0;      // m
  double dtheta_norm = 0.0;  // rad
};

/// Norms of |mean| + 1 sigma of the position and rotation blocks.
PoseErrorNorms pose_error_norms(const ErrorState& err);

/// Runs propagate_error across consecutive samples, starting from `seed`, using
/// `start` to rotate specific force, and returns the pose-error norms at the end.
PoseErrorNorms predicted_pose_error(const ErrorState& seed, const NavState& start,
                                    std::span<const ImuSample> samples,
                                    const NoiseModel& noise);

/// Samples covering [t0, t1] exactly: interior samples plus linearly
/// interpolated endpoints. Throws EmptyInterval if the stream does not cover it.
std::vector<ImuSample> slice_imu(std::span<const ImuSample> stream, double t0, double t1);

/// Dead-reckons `start` through the samples and returns the state at each
/// sample time (first entry is `start` at samples[0].t).
std::vector<NavState> integrate_states(const NavState& start,
                                       std::span<const ImuSample> samples,
                                       const NoiseModel& noise);

}  // namespace vislio
