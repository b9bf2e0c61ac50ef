#include "vislio/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <numbers>
#include <random>

#include "vislio/errors.hpp"

namespace vislio {

namespace {

// Quintic smoothstep and its integral; value, slope and curvature vanish at
// both ends of [0, 1].
double smooth(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smooth_d1(double u) { return 30.0 * u * u * (1.0 + u * (-2.0 + u)); }
double smooth_d2(double u) { return u * (60.0 + u * (-180.0 + 120.0 * u)); }
double smooth_int(double u) { return u * u * u * u * (2.5 + u * (-3.0 + u)); }

struct Signal {
  double v = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

// amp * smooth(tau / ramp) * sin(2 pi tau / period), zero before tau = 0.
Signal ramped_sine(double tau, double ramp, double amp, double period) {
  if (tau <= 0.0 || amp == 0.0) return {};
  const double u = std::min(tau / ramp, 1.0);
  const double h = smooth(u);
  const double h1 = tau < ramp ? smooth_d1(u) / ramp : 0.0;
  const double h2 = tau < ramp ? smooth_d2(u) / (ramp * ramp) : 0.0;
  const double w = 2.0 * std::numbers::pi / period;
  const double s = std::sin(w * tau);
  const double c = std::cos(w * tau);
  return {amp * h * s, amp * (h1 * s + h * w * c), amp * (h2 * s + 2.0 * h1 * w * c - h * w * w * s)};
}

bool slab(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi, double& t_hit) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / d[a];
    double ta = (lo[a] - o[a]) * inv;
    double tb = (hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t0 <= 1e-9) return false;  // origin inside or box behind
  t_hit = t0;
  return true;
}

}  // namespace

ConstantTwistTrajectory::ConstantTwistTrajectory(const Pose& start, const Vec3& velocity,
                                                 double yaw_rate)
    : start_(start), velocity_(velocity), yaw_rate_(yaw_rate) {}

Vec3 ConstantTwistTrajectory::position(double t) const { return start_.translation + velocity_ * t; }
Vec3 ConstantTwistTrajectory::velocity(double) const { return velocity_; }
Vec3 ConstantTwistTrajectory::acceleration(double) const { return Vec3::Zero(); }
Rotation ConstantTwistTrajectory::rotation(double t) const {
  return Rotation::about_z(yaw_rate_ * t) * start_.rotation;
}
Vec3 ConstantTwistTrajectory::body_rate(double t) const {
  return rotation(t).inverse() * Vec3(0.0, 0.0, yaw_rate_);
}

DriveTrajectory::DriveTrajectory(const DriveProfile& profile) : p_(profile) {}

Vec3 DriveTrajectory::position(double t) const {
  const double tau = t - p_.rest_duration;
  double x = 0.0;
  if (tau > 0.0) {
    const double u = std::min(tau / p_.ramp_duration, 1.0);
    x = p_.cruise_speed * p_.ramp_duration * smooth_int(u);
    if (tau > p_.ramp_duration) x += p_.cruise_speed * (tau - p_.ramp_duration);
  }
  const double ramp = p_.ramp_duration;
  return p_.start + Vec3(x, ramped_sine(tau, ramp, p_.lateral_amplitude, p_.lateral_period).v,
                         ramped_sine(tau, ramp, p_.heave_amplitude, p_.heave_period).v);
}

Vec3 DriveTrajectory::velocity(double t) const {
  const double tau = t - p_.rest_duration;
  const double vx = tau > 0.0 ? p_.cruise_speed * smooth(std::min(tau / p_.ramp_duration, 1.0)) : 0.0;
  const double ramp = p_.ramp_duration;
  return Vec3(vx, ramped_sine(tau, ramp, p_.lateral_amplitude, p_.lateral_period).d1,
              ramped_sine(tau, ramp, p_.heave_amplitude, p_.heave_period).d1);
}

Vec3 DriveTrajectory::acceleration(double t) const {
  const double tau = t - p_.rest_duration;
  const double ax = tau > 0.0 && tau < p_.ramp_duration
                        ? p_.cruise_speed * smooth_d1(tau / p_.ramp_duration) / p_.ramp_duration
                        : 0.0;
  const double ramp = p_.ramp_duration;
  return Vec3(ax, ramped_sine(tau, ramp, p_.lateral_amplitude, p_.lateral_period).d2,
              ramped_sine(tau, ramp, p_.heave_amplitude, p_.heave_period).d2);
}

void DriveTrajectory::euler(double t, Vec3& angles, Vec3& rates) const {
  const double tau = t - p_.rest_duration;
  const double ramp = p_.ramp_duration;
  const Signal yaw = ramped_sine(tau, ramp, p_.yaw_amplitude, p_.yaw_period);
  const Signal pitch = ramped_sine(tau, ramp, p_.pitch_amplitude, p_.pitch_period);
  const Signal roll = ramped_sine(tau, ramp, p_.roll_amplitude, p_.roll_period);
  angles = Vec3(yaw.v, pitch.v, roll.v);
  rates = Vec3(yaw.d1, pitch.d1, roll.d1);
}

Rotation DriveTrajectory::rotation(double t) const {
  Vec3 a;
  Vec3 r;
  euler(t, a, r);
  return Rotation::about_z(a[0]) * Rotation::about_y(a[1]) * Rotation::about_x(a[2]);
}

Vec3 DriveTrajectory::body_rate(double t) const {
  Vec3 a;
  Vec3 r;
  euler(t, a, r);
  const double sp = std::sin(a[1]);
  const double cp = std::cos(a[1]);
  const double sr = std::sin(a[2]);
  const double cr = std::cos(a[2]);
  // Z-Y-X Euler rates mapped to body rates.
  return Vec3(r[2] - r[0] * sp, r[1] * cr + r[0] * sr * cp, -r[1] * sr + r[0] * cr * cp);
}

Pose MovingBox::pose(double t) const {
  const double dt = t - t_begin;
  return Pose(Rotation::about_z(yaw + yaw_rate * dt), center + velocity * dt);
}

int LidarModel::columns() const {
  return static_cast<int>(std::lround(2.0 * std::numbers::pi / horizontal_resolution));
}

double LidarModel::elevation(int ring) const {
  if (channels <= 1) return 0.0;
  return -0.5 * vertical_fov + vertical_fov * ring / (channels - 1);
}

std::optional<RayHit> cast_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir,
                               double t, double max_range) {
  std::optional<RayHit> best;
  auto offer = [&](double range, bool dyn, int prim) {
    if (range <= max_range && (!best || range < best->range)) best = RayHit{range, dyn, prim};
  };
  if (scene.has_ground && dir.z() < 0.0 && origin.z() > scene.ground_z) {
    offer((scene.ground_z - origin.z()) / dir.z(), false, -1);
  }
  for (std::size_t i = 0; i < scene.static_boxes.size(); ++i) {
    double th = 0.0;
    if (slab(origin, dir, scene.static_boxes[i].min, scene.static_boxes[i].max, th)) {
      offer(th, false, static_cast<int>(i));
    }
  }
  for (std::size_t i = 0; i < scene.moving.size(); ++i) {
    const MovingBox& m = scene.moving[i];
    if (!m.active(t)) continue;
    const Pose bp = m.pose(t);
    const Mat3 rt = bp.rotation.matrix().transpose();
    double th = 0.0;
    if (slab(rt * (origin - bp.translation), rt * dir, -m.half_extent, m.half_extent, th)) {
      offer(th, true, static_cast<int>(scene.static_boxes.size() + i));
    }
  }
  return best;
}

LabeledSweep raycast_sweep(const SceneSpec& scene, const TrajectoryModel& traj, double sweep_start,
                           std::uint64_t noise_seed) {
  const LidarModel& lidar = scene.lidar;
  const int cols = lidar.columns();
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  LabeledSweep out;
  out.scan.stamp = sweep_start;
  out.scan.points.reserve(static_cast<std::size_t>(cols * lidar.channels));
  for (int c = 0; c < cols; ++c) {
    const double t_rel = lidar.sweep_period * c / cols;
    const double t = sweep_start + t_rel;
    const Pose sensor = traj.pose(t);
    const double az = -std::numbers::pi + c * lidar.horizontal_resolution;
    for (int r = 0; r < lidar.channels; ++r) {
      const double el = lidar.elevation(r);
      const Vec3 d_s(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = cast_ray(scene, sensor.translation, sensor.rotation * d_s, t, lidar.max_range);
      if (!hit) continue;
      double range = hit->range;
      if (lidar.range_noise > 0.0) range += lidar.range_noise * noise(rng);
      out.scan.points.push_back(RawPoint{range * d_s, t_rel, r});
      out.dynamic.push_back(hit->dynamic ? 1 : 0);
    }
  }
  return out;
}

std::vector<ImuSample> synthesize_imu(const TrajectoryModel& traj, const ImuSynthesis& cfg,
                                      double t0, double t1, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double dt = 1.0 / cfg.rate;
  const auto count = static_cast<long>(std::floor((t1 - t0) * cfg.rate + 1e-9)) + 1;
  const double gyro_sd = cfg.noise.gyro_noise / std::sqrt(dt);
  const double accel_sd = cfg.noise.accel_noise / std::sqrt(dt);
  const double gyro_walk_sd = cfg.noise.gyro_walk * std::sqrt(dt);
  const double accel_walk_sd = cfg.noise.accel_walk * std::sqrt(dt);
  auto gauss3 = [&]() { return Vec3(n01(rng), n01(rng), n01(rng)); };

  ImuBias bias = cfg.bias;
  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const Rotation r = traj.rotation(t);
    ImuSample s;
    s.t = t;
    s.gyro = traj.body_rate(t) + bias.gyro;
    s.accel = r.inverse() * (traj.acceleration(t) - cfg.noise.gravity) + bias.accel;
    if (!cfg.noiseless) {
      s.gyro += gyro_sd * gauss3();
      s.accel += accel_sd * gauss3();
      bias.gyro += gyro_walk_sd * gauss3();
      bias.accel += accel_walk_sd * gauss3();
    }
    out.push_back(s);
  }
  return out;
}

SceneSpec street_scene(bool with_movers, std::uint64_t seed) {
  SceneSpec s;
  s.name = with_movers ? "street-dynamic" : "street-static";
  s.seed = seed;
  s.duration = 20.0;
  s.imu.bias.gyro = Vec3(0.002, -0.001, 0.0015);
  s.imu.bias.accel = Vec3(0.02, -0.015, 0.01);
  s.lidar.range_noise = 0.01;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * uni(rng); };

  // Building rows on both sides, interrupted by a cross street.
  const double cross_lo = 48.0;
  const double cross_hi = 60.0;
  for (const double side : {-1.0, 1.0}) {
    double x = -42.0;
    while (x < 148.0) {
      const double len = between(10.0, 22.0);
      const double x1 = std::min(x + len, 148.0);
      const double setback = between(0.0, 1.6);
      const double height = between(7.0, 24.0);
      const double front = 9.0 + setback;
      const double depth = 10.0;
      auto add = [&](double a, double b) {
        if (b - a < 1.0) return;
        const double y0 = side > 0 ? front : -front - depth;
        s.static_boxes.push_back({Vec3(a, y0, 0.0), Vec3(b, y0 + depth, height)});
      };
      if (x1 <= cross_lo || x >= cross_hi) {
        add(x, x1);
      } else {
        add(x, cross_lo);
        add(cross_hi, x1);
      }
      x = x1 + between(1.5, 4.0);
    }
    // Poles and parked cars along the kerb.
    for (double px = -35.0; px < 145.0; px += between(11.0, 17.0)) {
      if (px > cross_lo - 2.0 && px < cross_hi + 2.0) continue;
      const double py = side * 7.2;
      s.static_boxes.push_back({Vec3(px - 0.15, py - 0.15, 0.0), Vec3(px + 0.15, py + 0.15, 5.0)});
      if (uni(rng) < 0.5) {
        const double cx = px + 5.0;
        const double cy = side * 5.8;
        s.static_boxes.push_back({Vec3(cx - 2.1, cy - 0.9, 0.0), Vec3(cx + 2.1, cy + 0.9, 1.5)});
      }
    }
  }
  // Closing walls so that horizontal beams along the street find a background.
  s.static_boxes.push_back({Vec3(-48.0, -25.0, 0.0), Vec3(-45.0, 25.0, 30.0)});
  s.static_boxes.push_back({Vec3(150.0, -25.0, 0.0), Vec3(153.0, 25.0, 30.0)});
  // Far sides of the cross street.
  s.static_boxes.push_back({Vec3(cross_lo, 30.0, 0.0), Vec3(cross_hi, 33.0, 18.0)});
  s.static_boxes.push_back({Vec3(cross_lo, -33.0, 0.0), Vec3(cross_hi, -30.0, 18.0)});

  if (with_movers) {
    // Box-shaped vehicles riding 0.7 m above the road.
    const Vec3 truck(3.0, 1.25, 1.25);
    const double zc = 0.7 + truck.z();
    auto mover = [&](Vec3 c, double yaw, Vec3 v, double t0, double t1) {
      MovingBox m;
      m.center = c;
      m.half_extent = truck;
      m.yaw = yaw;
      m.velocity = v;
      m.t_begin = t0;
      m.t_end = t1;
      s.moving.push_back(m);
    };
    mover(Vec3(14.0, -3.2, zc), 0.0, Vec3(6.5, 0.0, 0.0), 0.0, 19.0);   // lead, same direction
    mover(Vec3(120.0, 3.2, zc), 0.0, Vec3(-7.0, 0.0, 0.0), 0.0, 20.0);  // oncoming
    mover(Vec3(54.0, -40.0, zc), std::numbers::pi / 2, Vec3(0.0, 6.0, 0.0), 5.0, 20.0);  // crossing
    mover(Vec3(-30.0, -3.2, zc), 0.0, Vec3(8.0, 0.0, 0.0), 2.0, 20.0);   // overtaking
    mover(Vec3(140.0, 3.5, zc), 0.0, Vec3(-9.0, 0.0, 0.0), 6.0, 20.0);   // second oncoming
  }
  return s;
}

SensorMeta scene_meta(const SceneSpec& scene) {
  SensorMeta m;
  m.name = scene.name;
  m.channels = scene.lidar.channels;
  m.vertical_fov = scene.lidar.vertical_fov;
  m.horizontal_resolution = scene.lidar.horizontal_resolution;
  m.sweep_period = scene.lidar.sweep_period;
  m.max_range = scene.lidar.max_range;
  m.imu_rate = scene.imu.rate;
  m.sensor_height = scene.drive.start.z() - scene.ground_z;
  m.noise = scene.imu.noise;
  return m;
}

Dataset simulate_dataset(const SceneSpec& scene) {
  const DriveTrajectory traj(scene.drive);
  Dataset data;
  data.meta = scene_meta(scene);
  data.imu = synthesize_imu(traj, scene.imu, 0.0, scene.duration, scene.seed * 2 + 1);
  const double period = scene.lidar.sweep_period;
  const auto count = static_cast<int>(std::floor(scene.duration / period + 1e-9));
  for (int k = 0; k < count; ++k) {
    const double start = k * period;
    LabeledSweep sweep = raycast_sweep(scene, traj, start, scene.seed * 7919 + static_cast<std::uint64_t>(k));
    data.scans.push_back(std::move(sweep.scan));
    data.labels.push_back(std::move(sweep.dynamic));
    const double t_end = start + period;
    data.ground_truth.push_back({t_end, traj.pose(t_end)});
  }
  return data;
}

void write_scene(const SceneSpec& s, std::ostream& os) {
  const DriveProfile& d = s.drive;
  os << "# scene description; lengths in m, angles in rad, times in s\n"
     << "name=" << s.name << "\n"
     << "seed=" << s.seed << "\n"
     << "duration=" << s.duration << "\n"
     << "ground_z=" << s.ground_z << " has_ground=" << s.has_ground << "\n"
     << "lidar channels=" << s.lidar.channels << " vertical_fov=" << s.lidar.vertical_fov
     << " horizontal_resolution=" << s.lidar.horizontal_resolution
     << " sweep_period=" << s.lidar.sweep_period << " max_range=" << s.lidar.max_range
     << " range_noise=" << s.lidar.range_noise << "\n"
     << "imu rate=" << s.imu.rate << " gyro_noise=" << s.imu.noise.gyro_noise
     << " accel_noise=" << s.imu.noise.accel_noise << " gyro_walk=" << s.imu.noise.gyro_walk
     << " accel_walk=" << s.imu.noise.accel_walk << " gyro_bias=" << s.imu.bias.gyro.transpose()
     << " accel_bias=" << s.imu.bias.accel.transpose() << " noiseless=" << s.imu.noiseless << "\n"
     << "drive start=" << d.start.transpose() << " rest=" << d.rest_duration
     << " ramp=" << d.ramp_duration << " speed=" << d.cruise_speed
     << " lateral=" << d.lateral_amplitude << "/" << d.lateral_period
     << " heave=" << d.heave_amplitude << "/" << d.heave_period
     << " yaw=" << d.yaw_amplitude << "/" << d.yaw_period
     << " roll=" << d.roll_amplitude << "/" << d.roll_period
     << " pitch=" << d.pitch_amplitude << "/" << d.pitch_period << "\n";
  for (const Aabb& b : s.static_boxes) {
    os << "box min=" << b.min.transpose() << " max=" << b.max.transpose() << "\n";
  }
  for (const MovingBox& m : s.moving) {
    os << "mover center=" << m.center.transpose() << " half=" << m.half_extent.transpose()
       << " yaw=" << m.yaw << " velocity=" << m.velocity.transpose() << " yaw_rate=" << m.yaw_rate
       << " active=" << m.t_begin << ".." << m.t_end << "\n";
  }
}

void generate_dataset(const SceneSpec& scene, const std::filesystem::path& dir) {
  write_dataset(simulate_dataset(scene), dir);
  std::ofstream os(dir / "scene.txt");
  write_scene(scene, os);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / "scene.txt").string());
}

}  // namespace vislio
