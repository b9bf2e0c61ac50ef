#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vislio/features.hpp"
#include "vislio/imu.hpp"
#include "vislio/matching.hpp"
#include "vislio/range_image.hpp"

namespace vislio {

enum class RemovalMode { Off, After, First, FirstAndAfter };

const char* to_string(RemovalMode mode);
/// Accepts off, after, first, fa / first-and-after. Throws InvalidArgument.
RemovalMode parse_removal_mode(const std::string& text);

struct KeyframeGates {
  double translation = 1.0;  // m
  double rotation = 0.2;     // rad
};

struct PipelineConfig {
  RemovalMode mode = RemovalMode::FirstAndAfter;
  int max_rounds = 3;
  KeyframeGates gates;
  int window = 25;
  double edge_leaf = 0.2;   // m, submap and scan edge voxel
  double plane_leaf = 0.4;  // m, submap and scan planar voxel
  RemovalParams removal;
  MatchParams matching;
  FeatureParams features;
  double tau_d = 1.0;    // m, outlier gate of the convergence score
  double score0 = 0.25;  // m
  NoiseModel noise;
  double sweep_period = 0.1;        // s
  double bootstrap_duration = 0.5;  // s of IMU at rest before motion
  double sensor_height = 1.8;       // m above ground at start
  double min_range = 0.5;           // m, closer returns are dropped
  double velocity_gain = 0.5;       // share of the lidar position correction fed to velocity
  FieldOfView fov;
};

struct Keyframe {
  int id = 0;
  int scan_index = 0;
  double stamp = 0.0;  // sweep end
  Pose pose;           // world <- sensor
  NavState state;
  FeatureSet features;    // sensor frame; ids index full_scan
  PointCloud full_scan;   // deskewed, sensor frame
  std::vector<int> rings;      // per full_scan point
  std::vector<int> raw_index;  // position of each full_scan point in the raw sweep
  std::size_t map_begin = 0;  // first map slot of full_scan
  bool low_confidence = false;
  double score = 0.0;
};

/// Every keyframe point in world coordinates. Points are never erased, only
/// marked dead, so (scan, point) provenance stays available for evaluation.
struct PointMap {
  PointCloud points;
  std::vector<int> scan_index;
  std::vector<int> point_index;
  std::vector<char> alive;

  std::size_t size() const { return points.size(); }
  std::size_t alive_count() const;
  PointCloud alive_points() const;
};

/// Matching target assembled from a window of keyframes.
struct Submap {
  SubmapIndex index;
  std::vector<std::size_t> edge_map_ids;   // map slot of every submap edge point
  std::vector<std::size_t> plane_map_ids;
  std::vector<int> keyframe_ids;
};

/// Window feature union in world coordinates, restricted to live map points,
/// voxel-deduplicated. When given, `keep` further filters the window's map
/// slots; it is indexed from window.front().map_begin. Throws EmptyWindow for
/// an empty window.
Submap build_submap(std::span<const Keyframe> window, const PointMap& map, double edge_leaf,
                    double plane_leaf, const std::vector<char>* keep = nullptr);

/// Strict gates: true iff translation > gate or rotation > gate.
bool should_create_keyframe(const Pose& pred, const Pose& last_kf, const KeyframeGates& gates);

/// T_{k+1} = T_k * delta.
Pose compose_odometry(const Pose& prev, const Pose& delta);

struct StageTimings {
  double predict_ms = 0.0;
  double deskew_ms = 0.0;
  double features_ms = 0.0;
  double removal_ms = 0.0;
  double matching_ms = 0.0;
  double finalize_ms = 0.0;
  double total_ms = 0.0;
};

enum class ScanStatus { Bootstrap, Accepted, LowConfidence };
const char* to_string(ScanStatus status);

struct ScanRecord {
  int scan_index = 0;
  double stamp = 0.0;  // sweep end
  Pose pose;
  ScanStatus status = ScanStatus::Accepted;
  bool keyframe = false;
  int keyframe_id = -1;
  double score = 0.0;
  int rounds = 0;
  std::vector<double> resolutions;  // finalized resolution of every round
  int scan_points = 0;
  int edge_features = 0;
  int planar_features = 0;
  int removed_scan = 0;      // scan points flagged before matching (accepted round)
  int removed_submap = 0;    // submap points flagged before matching (accepted round)
  int removed_final = 0;     // fine-resolution pass: scan + map points
  int match_iterations = 0;
  StageTimings timings;
};

/// Range images of one visibility test.
struct RemovalPreview {
  Resolution resolution;
  Pose origin;
  RangeImage scan_image;
  RangeImage map_image;
  DiffImage diff;
  DynamicClassification classes;  // scan ids index the deskewed sweep
};

/// Lidar-inertial odometry with optional visibility-based removal of moving
/// points, before matching, after it, or both.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  /// Processes one sweep. `imu` is the full time-sorted stream; it must cover
  /// the sweep and the bootstrap interval.
  ScanRecord process_scan(const RawScan& scan, std::span<const ImuSample> imu);

  /// Fine-resolution removal of a keyframe scan against the current window and
  /// insertion of its survivors. Returns the number of flagged points.
  int finalize_keyframe(Keyframe& kf, const std::vector<char>& scan_keep, bool fine_pass);

  /// The first-round visibility test the next process_scan call would run on
  /// this sweep, without changing any state. Needs at least one processed sweep.
  RemovalPreview preview_removal(const RawScan& scan, std::span<const ImuSample> imu) const;

  const PipelineConfig& config() const { return config_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const PointMap& map() const { return map_; }
  const std::vector<ScanRecord>& records() const { return records_; }
  const NavState& state() const { return state_; }

 private:
  struct Prepared {
    NavState prev;
    NavState pred;
    std::vector<ImuSample> slice;
    PreintegratedDelta delta;
    PointCloud cloud;  // deskewed, sensor frame at sweep end
    std::vector<int> rings;
    std::vector<int> raw_index;
    FeatureSet features;
    double predict_ms = 0.0;
    double deskew_ms = 0.0;
    double features_ms = 0.0;
  };
  struct Comparison {
    bool valid = false;
    RangeImage scan_img;
    RangeImage map_img;
    DiffImage diff;
    DynamicClassification cls;
    std::vector<std::size_t> slots;  // map slot of every window point
  };

  void bootstrap(std::span<const ImuSample> imu);
  Prepared prepare(const RawScan& scan, std::span<const ImuSample> imu) const;
  Resolution initial_resolution(const Prepared& p) const;
  Comparison compare_with_window(const PointCloud& scan_world, const Pose& origin,
                                 Resolution res) const;
  std::span<const Keyframe> window() const;
  std::size_t window_begin() const;
  /// Live map points of the window and their slots.
  PointCloud window_points(std::vector<std::size_t>& slots) const;
  /// Visibility test of a world-frame scan against the window at `origin`.
  /// Flags scan points in scan_keep and window slots in window_keep.
  void classify_against_window(const PointCloud& scan_world, const Pose& origin, Resolution res,
                               std::vector<char>& scan_keep, std::vector<char>& window_keep,
                               int& scan_flagged, int& window_flagged) const;

  PipelineConfig config_;
  bool initialized_ = false;
  NavState state_;
  PreintegrationError last_error_;
  PreintegratedDelta last_delta_;
  std::vector<Keyframe> keyframes_;
  PointMap map_;
  std::vector<ScanRecord> records_;
  int scan_counter_ = 0;
};

}  // namespace vislio
