#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vislio/dataset.hpp"
#include "vislio/features.hpp"
#include "vislio/imu.hpp"

namespace vislio {

/// Continuous sensor motion with analytic first and second derivatives.
class TrajectoryModel {
 public:
  virtual ~TrajectoryModel() = default;
  virtual Vec3 position(double t) const = 0;
  virtual Vec3 velocity(double t) const = 0;      // world frame
  virtual Vec3 acceleration(double t) const = 0;  // world frame
  virtual Rotation rotation(double t) const = 0;  // world <- body
  virtual Vec3 body_rate(double t) const = 0;     // body frame

  Pose pose(double t) const { return Pose(rotation(t), position(t)); }
};

/// Constant world velocity and constant yaw rate about world z.
class ConstantTwistTrajectory : public TrajectoryModel {
 public:
  ConstantTwistTrajectory(const Pose& start, const Vec3& velocity, double yaw_rate);
  Vec3 position(double t) const override;
  Vec3 velocity(double t) const override;
  Vec3 acceleration(double t) const override;
  Rotation rotation(double t) const override;
  Vec3 body_rate(double t) const override;

 private:
  Pose start_;
  Vec3 velocity_;
  double yaw_rate_;
};

/// Street drive: rest, a smooth speed ramp, then cruising with gentle lateral,
/// heave and attitude oscillations. All channels are C2 everywhere, including
/// the transitions out of rest.
struct DriveProfile {
  Vec3 start = Vec3(0.0, 0.0, 1.8);
  double rest_duration = 1.0;  // s
  double ramp_duration = 3.0;  // s
  double cruise_speed = 5.0;   // m/s along +x
  double lateral_amplitude = 0.6;
  double lateral_period = 9.0;
  double heave_amplitude = 0.03;
  double heave_period = 2.3;
  double yaw_amplitude = 0.08;  // rad
  double yaw_period = 7.0;
  double roll_amplitude = 0.015;
  double roll_period = 2.9;
  double pitch_amplitude = 0.012;
  double pitch_period = 3.7;
};

class DriveTrajectory : public TrajectoryModel {
 public:
  explicit DriveTrajectory(const DriveProfile& profile);
  Vec3 position(double t) const override;
  Vec3 velocity(double t) const override;
  Vec3 acceleration(double t) const override;
  Rotation rotation(double t) const override;
  Vec3 body_rate(double t) const override;

  /// Yaw, pitch, roll and their first derivatives.
  void euler(double t, Vec3& angles, Vec3& rates) const;

 private:
  DriveProfile p_;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

/// Yaw-rotated box moving with constant velocity and yaw rate while active.
/// center and yaw are the values at t_begin.
struct MovingBox {
  Vec3 center = Vec3::Zero();
  Vec3 half_extent = Vec3::Ones();
  double yaw = 0.0;
  Vec3 velocity = Vec3::Zero();
  double yaw_rate = 0.0;
  double t_begin = 0.0;
  double t_end = 1e9;

  bool active(double t) const { return t >= t_begin && t <= t_end; }
  Pose pose(double t) const;  // world <- box
};

struct LidarModel {
  int channels = 16;
  double vertical_fov = 0.5235987755982988;       // rad, symmetric about the horizon
  double horizontal_resolution = 0.00349065850398866;  // rad (0.2 deg)
  double sweep_period = 0.1;  // s
  double max_range = 120.0;   // m
  double range_noise = 0.0;   // m, Gaussian std

  int columns() const;
  double elevation(int ring) const;
};

struct ImuSynthesis {
  double rate = 400.0;  // Hz
  NoiseModel noise;
  ImuBias bias;
  bool noiseless = false;
};

struct SceneSpec {
  std::string name = "scene";
  double ground_z = 0.0;
  bool has_ground = true;
  std::vector<Aabb> static_boxes;
  std::vector<MovingBox> moving;
  LidarModel lidar;
  DriveProfile drive;
  ImuSynthesis imu;
  double duration = 20.0;  // s
  std::uint64_t seed = 1;
};

struct RayHit {
  double range = 0.0;
  bool dynamic = false;
  int primitive = -1;  // -1 ground, then static boxes, then moving boxes
};

/// Nearest intersection of a world ray with the scene at time t.
std::optional<RayHit> cast_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir,
                               double t, double max_range);

/// One sweep with ground-truth labels.
struct LabeledSweep {
  RawScan scan;
  std::vector<char> dynamic;  // per point
};

/// Sweep starting at sweep_start; beams fire column by column across the
/// sweep, every channel of a column at once. `noise_seed` drives range noise.
LabeledSweep raycast_sweep(const SceneSpec& scene, const TrajectoryModel& traj, double sweep_start,
                           std::uint64_t noise_seed = 0);

/// Gyro and accelerometer readings at `rate` from t0 to t1 inclusive.
std::vector<ImuSample> synthesize_imu(const TrajectoryModel& traj, const ImuSynthesis& cfg,
                                      double t0, double t1, std::uint64_t seed);

/// Sensor constants of a scene in dataset form.
SensorMeta scene_meta(const SceneSpec& scene);

/// floor(duration / sweep period) labeled sweeps, the IMU stream over
/// [0, duration] and ground-truth poses at every sweep end. Deterministic in
/// scene.seed.
Dataset simulate_dataset(const SceneSpec& scene);

/// Human-readable scene description.
void write_scene(const SceneSpec& scene, std::ostream& os);

/// simulate_dataset written in the dataset layout plus scene.txt. Throws
/// IoFailure.
void generate_dataset(const SceneSpec& scene, const std::filesystem::path& dir);

/// Street canyon with buildings, poles and a cross street. With movers set,
/// five box-shaped vehicles drive through it.
SceneSpec street_scene(bool with_movers, std::uint64_t seed = 7);

}  // namespace vislio
