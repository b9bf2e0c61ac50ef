#pragma once

#include <span>
#include <vector>

#include "vislio/geometry.hpp"
#include "vislio/point_cloud.hpp"

namespace vislio {

struct RawPoint {
  Vec3 xyz = Vec3::Zero();  // sensor frame at fire time
  double t_rel = 0.0;       // seconds after the sweep stamp
  int ring = 0;
};

struct RawScan {
  double stamp = 0.0;  // sweep start
  std::vector<RawPoint> points;
};

/// Sensor poses over a time span, interpolated with slerp + lerp.
class MotionTrack {
 public:
  void add(double t, const Pose& pose);

  double begin_time() const;
  double end_time() const;
  bool empty() const { return times_.empty(); }

  /// Throws MotionGap outside [begin_time, end_time].
  Pose at(double t) const;

 private:
  std::vector<double> times_;
  std::vector<Pose> poses_;
};

/// Re-expresses every point in the sensor frame at stamp + sweep_period.
/// Output order matches scan.points.
PointCloud deskew(const RawScan& scan, const MotionTrack& motion, double sweep_period);

struct FeatureParams {
  int half_window = 5;
  int sectors = 6;
  double edge_threshold = 0.008;
  double planar_threshold = 0.002;
  int edge_cap = 20;    // per sector; <= 0 means unlimited
  int planar_cap = 0;   // per sector; <= 0 means unlimited
  double occlusion_depth_gap = 0.3;     // m
  double parallel_beam_ratio = 0.02;    // relative depth jump on both sides
  double neighbor_max_angle = 0.02;     // rad; larger gaps break the window
};

struct FeatureSet {
  PointCloud edge;
  PointCloud planar;
  std::vector<int> edge_ids;    // indices into the extraction input
  std::vector<int> planar_ids;
  int sparse_rings = 0;         // rings skipped for having too few points
};

/// Roughness c_i = |sum_j (p_j - p_i)| / (|window| * |p_i|) over the ring
/// neighbours; NaN where the window is incomplete.
std::vector<double> ring_roughness(const PointCloud& cloud, std::span<const int> ring_order,
                                   int half_window);

/// Edge/planar selection per ring and sector. `rings` gives each point's ring
/// index; points of a ring are taken in input order.
FeatureSet extract_features(const PointCloud& cloud, std::span<const int> rings,
                            const FeatureParams& params = {});

FeatureSet transform_features(const FeatureSet& features, const Pose& pose);

}  // namespace vislio
