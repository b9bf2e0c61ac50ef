#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vislio/features.hpp"
#include "vislio/imu.hpp"

namespace vislio {

struct TimedPose {
  double t = 0.0;
  Pose pose;
};

/// Time-stamped poses, strictly increasing in t.
using Trajectory = std::vector<TimedPose>;

/// Sensor constants stored next to a dataset in meta.txt.
struct SensorMeta {
  std::string name = "dataset";
  int channels = 16;
  double vertical_fov = 0.5235987755982988;
  double horizontal_resolution = 0.00349065850398866;
  double sweep_period = 0.1;
  double max_range = 120.0;
  double imu_rate = 400.0;
  double sensor_height = 1.8;
  NoiseModel noise;
};

/// On-disk layout:
///   meta.txt         key=value sensor constants
///   imu.csv          t,gx,gy,gz,ax,ay,az
///   scans/%06d.csv   "# stamp <t>" then x,y,z,t_rel,ring[,label]
///   gt.txt           t tx ty tz qx qy qz qw (optional)
struct Dataset {
  SensorMeta meta;
  std::vector<ImuSample> imu;
  std::vector<RawScan> scans;
  std::vector<std::vector<char>> labels;  // per scan; empty when unlabeled
  Trajectory ground_truth;

  bool labeled() const { return !labels.empty(); }
};

/// Throws IoFailure when a file cannot be written.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Validates and time-sorts the streams. Throws FormatError (naming file and
/// line) for malformed or missing files and ClockSkew when a sweep is not
/// covered by the IMU stream.
Dataset read_dataset(const std::filesystem::path& dir);

void write_meta(const SensorMeta& meta, std::ostream& os);
SensorMeta read_meta(std::istream& is, const std::string& source);

void write_trajectory(const Trajectory& traj, std::ostream& os);
void write_trajectory(const Trajectory& traj, const std::filesystem::path& file);
/// Throws FormatError for malformed rows or non-increasing stamps.
Trajectory read_trajectory(std::istream& is, const std::string& source);
Trajectory read_trajectory(const std::filesystem::path& file);

}  // namespace vislio
