#include "vislio/imu.hpp"

#include <algorithm>
#include <cmath>

#include "vislio/errors.hpp"

namespace vislio {

namespace {

constexpr int kTh = 0;  // covariance blocks of PreintegratedDelta
constexpr int kV = 3;
constexpr int kP = 6;

void check_samples(std::span<const ImuSample> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::EmptyInterval, "preintegration needs at least two samples");
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw Error(ErrorCode::NonMonotonicTime, "IMU timestamps must strictly increase");
    }
  }
}

template <typename M>
void symmetrize(M& m) {
  m = 0.5 * (m + m.transpose()).eval();
}

ImuSample lerp_sample(const ImuSample& a, const ImuSample& b, double t) {
  const double s = (t - a.t) / (b.t - a.t);
  ImuSample out;
  out.t = t;
  out.gyro = (1.0 - s) * a.gyro + s * b.gyro;
  out.accel = (1.0 - s) * a.accel + s * b.accel;
  return out;
}

}  // namespace

PreintegratedDelta preintegrate(std::span<const ImuSample> samples, const ImuBias& bias_ref,
                                const NoiseModel& noise) {
  check_samples(samples);

  PreintegratedDelta d;
  d.bias_ref = bias_ref;

  Mat3 r = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  BiasJacobians& j = d.jac;
  Mat9& cov = d.covariance;

  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    const Vec3 w = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - bias_ref.gyro;
    const Vec3 a0 = samples[i].accel - bias_ref.accel;
    const Vec3 a1 = samples[i + 1].accel - bias_ref.accel;

    const Vec3 phi = w * dt;
    const Mat3 r_inc = so3_exp(phi).matrix();
    const Mat3 jr = so3_right_jacobian(phi);
    const Mat3 r1 = r * r_inc;
    const Vec3 acc = 0.5 * (r * a0 + r1 * a1);

    // Exact first-order sensitivities of this discrete scheme.
    const Mat3 rot_gyro1 = r_inc.transpose() * j.rot_gyro - jr * dt;
    const Mat3 dacc_dbg = -0.5 * (r * skew(a0) * j.rot_gyro + r1 * skew(a1) * rot_gyro1);
    const Mat3 dacc_dba = -0.5 * (r + r1);
    j.pos_gyro += j.vel_gyro * dt + 0.5 * dacc_dbg * dt * dt;
    j.pos_accel += j.vel_accel * dt + 0.5 * dacc_dba * dt * dt;
    j.vel_gyro += dacc_dbg * dt;
    j.vel_accel += dacc_dba * dt;
    j.rot_gyro = rot_gyro1;

    Mat9 a = Mat9::Identity();
    const Mat3 dacc_dth = -0.5 * (r * skew(a0) + r1 * skew(a1) * r_inc.transpose());
    a.block<3, 3>(kTh, kTh) = r_inc.transpose();
    a.block<3, 3>(kV, kTh) = dacc_dth * dt;
    a.block<3, 3>(kP, kTh) = 0.5 * dacc_dth * dt * dt;
    a.block<3, 3>(kP, kV) = Mat3::Identity() * dt;

    Eigen::Matrix<double, 9, 6> b = Eigen::Matrix<double, 9, 6>::Zero();
    const Mat3 dacc_dng = -0.5 * r1 * skew(a1) * jr * dt;
    b.block<3, 3>(kTh, 0) = jr * dt;
    b.block<3, 3>(kV, 0) = dacc_dng * dt;
    b.block<3, 3>(kP, 0) = 0.5 * dacc_dng * dt * dt;
    b.block<3, 3>(kV, 3) = 0.5 * (r + r1) * dt;
    b.block<3, 3>(kP, 3) = 0.25 * (r + r1) * dt * dt;

    Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
    q.block<3, 3>(0, 0).diagonal().setConstant(noise.gyro_noise * noise.gyro_noise / dt);
    q.block<3, 3>(3, 3).diagonal().setConstant(noise.accel_noise * noise.accel_noise / dt);

    cov = a * cov * a.transpose() + b * q * b.transpose();

    p += v * dt + 0.5 * acc * dt * dt;
    v += acc * dt;
    r = r1;
    d.dt_total += dt;
  }
  symmetrize(cov);

  d.delta_rotation = Rotation(r).normalized();
  d.delta_velocity = v;
  d.delta_position = p;
  return d;
}

CorrectedDelta correct_delta(const PreintegratedDelta& delta, const ImuBias& bias) {
  const Vec3 dbg = bias.gyro - delta.bias_ref.gyro;
  const Vec3 dba = bias.accel - delta.bias_ref.accel;
  const BiasJacobians& j = delta.jac;
  CorrectedDelta c;
  c.rotation = delta.delta_rotation * so3_exp(j.rot_gyro * dbg);
  c.velocity = delta.delta_velocity + j.vel_gyro * dbg + j.vel_accel * dba;
  c.position = delta.delta_position + j.pos_gyro * dbg + j.pos_accel * dba;
  return c;
}

NavState predict_state(const NavState& prev, const PreintegratedDelta& delta,
                       const NoiseModel& noise) {
  const CorrectedDelta c = correct_delta(delta, prev.bias);
  const double dt = delta.dt_total;
  const Vec3& g = noise.gravity;

  NavState next;
  next.rotation = prev.rotation * c.rotation;
  next.velocity = prev.velocity + g * dt + prev.rotation * c.velocity;
  next.position = prev.position + prev.velocity * dt + 0.5 * g * dt * dt +
                  prev.rotation * c.position;
  next.bias = prev.bias;
  next.t = prev.t + dt;
  return next;
}

PreintegrationError preintegration_error(const NavState& prev, const NavState& curr,
                                         const PreintegratedDelta& delta,
                                         const NoiseModel& noise) {
  const CorrectedDelta c = correct_delta(delta, prev.bias);
  const double dt = delta.dt_total;
  const Vec3& g = noise.gravity;
  const Rotation r_bw = prev.rotation.inverse();

  PreintegrationError e;
  e.rotation = so3_log(c.rotation.inverse() * r_bw * curr.rotation);
  e.velocity = r_bw * (curr.velocity - prev.velocity - g * dt) - c.velocity;
  e.position = r_bw * (curr.position - prev.position - prev.velocity * dt - 0.5 * g * dt * dt) -
               c.position;
  e.bias.gyro = curr.bias.gyro - prev.bias.gyro;
  e.bias.accel = curr.bias.accel - prev.bias.accel;
  return e;
}

ErrorState propagate_error(const ErrorState& prev, const ErrorStepInput& step,
                           const NoiseModel& noise) {
  const double dt = step.dt;
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::NonPositiveDt, "error propagation step needs dt > 0");
  }
  using E = ErrorState;
  const Mat3 i3 = Mat3::Identity();
  const Mat3& r = step.attitude.matrix();

  Mat15 f = Mat15::Identity();
  f.block<3, 3>(E::kTheta, E::kTheta) = i3 - skew(step.gyro) * dt;
  f.block<3, 3>(E::kTheta, E::kGyroBias) = -i3 * dt;
  f.block<3, 3>(E::kPos, E::kVel) = i3 * dt;
  f.block<3, 3>(E::kVel, E::kTheta) = -r * skew(step.accel) * dt;
  f.block<3, 3>(E::kVel, E::kAccelBias) = -r * dt;

  // Noise order: gyro, accel, gyro walk, accel walk.
  Eigen::Matrix<double, 15, 12> g = Eigen::Matrix<double, 15, 12>::Zero();
  g.block<3, 3>(E::kTheta, 0) = i3 * dt;
  g.block<3, 3>(E::kVel, 3) = r * dt;
  g.block<3, 3>(E::kGyroBias, 6) = i3 * dt;
  g.block<3, 3>(E::kAccelBias, 9) = i3 * dt;

  Eigen::Matrix<double, 12, 1> q;
  q.segment<3>(0).setConstant(noise.gyro_noise * noise.gyro_noise / dt);
  q.segment<3>(3).setConstant(noise.accel_noise * noise.accel_noise / dt);
  q.segment<3>(6).setConstant(noise.gyro_walk * noise.gyro_walk / dt);
  q.segment<3>(9).setConstant(noise.accel_walk * noise.accel_walk / dt);

  ErrorState next;
  next.mean = f * prev.mean;
  next.covariance = f * prev.covariance * f.transpose() + g * q.asDiagonal() * g.transpose();
  symmetrize(next.covariance);
  return next;
}

ErrorState propagate_error(const ErrorState& prev, const Vec3& gyro, double dt,
                           const NoiseModel& noise) {
  ErrorStepInput step;
  step.gyro = gyro;
  step.dt = dt;
  return propagate_error(prev, step, noise);
}

ErrorState seed_error(const PreintegrationError& err, const PreintegratedDelta& delta) {
  using E = ErrorState;
  ErrorState s;
  s.mean.segment<3>(E::kTheta) = err.rotation;
  s.mean.segment<3>(E::kPos) = err.position;
  s.mean.segment<3>(E::kVel) = err.velocity;
  s.mean.segment<3>(E::kAccelBias) = err.bias.accel;
  s.mean.segment<3>(E::kGyroBias) = err.bias.gyro;

  const int src[3] = {kTh, kP, kV};
  const int dst[3] = {E::kTheta, E::kPos, E::kVel};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      s.covariance.block<3, 3>(dst[a], dst[b]) = delta.covariance.block<3, 3>(src[a], src[b]);
    }
  }
  return s;
}

PoseErrorNorms pose_error_norms(const ErrorState& err) {
  using E = ErrorState;
  Vec3 dp;
  Vec3 dth;
  for (int i = 0; i < 3; ++i) {
    dp[i] = std::abs(err.mean[E::kPos + i]) +
            std::sqrt(std::max(0.0, err.covariance(E::kPos + i, E::kPos + i)));
    dth[i] = std::abs(err.mean[E::kTheta + i]) +
             std::sqrt(std::max(0.0, err.covariance(E::kTheta + i, E::kTheta + i)));
  }
  return {dp.norm(), dth.norm()};
}

PoseErrorNorms predicted_pose_error(const ErrorState& seed, const NavState& start,
                                    std::span<const ImuSample> samples,
                                    const NoiseModel& noise) {
  ErrorState err = seed;
  Rotation attitude = start.rotation;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    if (dt <= 0.0) {
      continue;
    }
    ErrorStepInput step;
    step.gyro = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - start.bias.gyro;
    step.accel = 0.5 * (samples[i].accel + samples[i + 1].accel) - start.bias.accel;
    step.attitude = attitude;
    step.dt = dt;
    err = propagate_error(err, step, noise);
    attitude = attitude * so3_exp(step.gyro * dt);
  }
  return pose_error_norms(err);
}

std::vector<ImuSample> slice_imu(std::span<const ImuSample> stream, double t0, double t1) {
  constexpr double kEps = 1e-9;
  if (stream.size() < 2 || !(t1 > t0) || stream.front().t > t0 + kEps ||
      stream.back().t < t1 - kEps) {
    throw Error(ErrorCode::EmptyInterval, "IMU stream does not cover the requested interval");
  }
  auto lower = std::lower_bound(stream.begin(), stream.end(), t0,
                                [](const ImuSample& s, double t) { return s.t < t; });
  std::vector<ImuSample> out;

  auto sample_at = [&](double t) {
    auto it = std::lower_bound(stream.begin(), stream.end(), t,
                               [](const ImuSample& s, double tt) { return s.t < tt; });
    if (it == stream.end()) {
      ImuSample s = stream.back();
      s.t = t;
      return s;
    }
    if (std::abs(it->t - t) <= kEps || it == stream.begin()) {
      ImuSample s = *it;
      s.t = t;
      return s;
    }
    return lerp_sample(*(it - 1), *it, t);
  };

  out.push_back(sample_at(t0));
  for (auto it = lower; it != stream.end() && it->t < t1 - kEps; ++it) {
    if (it->t > t0 + kEps) {
      out.push_back(*it);
    }
  }
  out.push_back(sample_at(t1));
  return out;
}

std::vector<NavState> integrate_states(const NavState& start,
                                       std::span<const ImuSample> samples,
                                       const NoiseModel& noise) {
  std::vector<NavState> out;
  out.reserve(samples.size());
  NavState s = start;
  if (!samples.empty()) {
    s.t = samples.front().t;
  }
  out.push_back(s);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    const Vec3 w = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - s.bias.gyro;
    const Rotation r1 = s.rotation * so3_exp(w * dt);
    const Vec3 acc = 0.5 * (s.rotation * (samples[i].accel - s.bias.accel) +
                            r1 * (samples[i + 1].accel - s.bias.accel)) +
                     noise.gravity;
    s.position += s.velocity * dt + 0.5 * acc * dt * dt;
    s.velocity += acc * dt;
    s.rotation = r1;
    s.t = samples[i + 1].t;
    out.push_back(s);
  }
  return out;
}

}  // namespace vislio
