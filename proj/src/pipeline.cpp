#include "vislio/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "vislio/errors.hpp"

namespace vislio {

const char* to_string(RemovalMode mode) {
  switch (mode) {
    case RemovalMode::Off: return "off";
    case RemovalMode::After: return "after";
    case RemovalMode::First: return "first";
    case RemovalMode::FirstAndAfter: return "fa";
  }
  return "?";
}

RemovalMode parse_removal_mode(const std::string& text) {
  if (text == "off") return RemovalMode::Off;
  if (text == "after") return RemovalMode::After;
  if (text == "first") return RemovalMode::First;
  if (text == "fa" || text == "first-and-after") return RemovalMode::FirstAndAfter;
  throw Error(ErrorCode::InvalidArgument, "unknown removal mode '" + text + "'");
}

const char* to_string(ScanStatus status) {
  switch (status) {
    case ScanStatus::Bootstrap: return "bootstrap";
    case ScanStatus::Accepted: return "accepted";
    case ScanStatus::LowConfidence: return "low-confidence";
  }
  return "?";
}

std::size_t PointMap::alive_count() const {
  return static_cast<std::size_t>(std::count(alive.begin(), alive.end(), char{1}));
}

PointCloud PointMap::alive_points() const {
  PointCloud out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (alive[i]) out.push_back(points[i]);
  }
  return out;
}

Submap build_submap(std::span<const Keyframe> window, const PointMap& map, double edge_leaf,
                    double plane_leaf, const std::vector<char>* keep) {
  if (window.empty()) {
    throw Error(ErrorCode::EmptyWindow, "submap window has no keyframes");
  }
  const std::size_t base = window.front().map_begin;
  auto usable = [&](std::size_t slot) {
    if (!map.alive[slot]) return false;
    return keep == nullptr || (*keep)[slot - base] != 0;
  };

  PointCloud edge;
  PointCloud plane;
  std::vector<std::size_t> edge_slots;
  std::vector<std::size_t> plane_slots;
  std::vector<long> edge_tags;
  std::vector<long> plane_tags;
  Submap sm;
  for (const Keyframe& kf : window) {
    sm.keyframe_ids.push_back(kf.id);
    for (const int id : kf.features.edge_ids) {
      const std::size_t slot = kf.map_begin + static_cast<std::size_t>(id);
      if (!usable(slot)) continue;
      edge.push_back(map.points[slot]);
      edge_slots.push_back(slot);
      edge_tags.push_back(static_cast<long>(kf.id) * 1024 + kf.rings[static_cast<std::size_t>(id)]);
    }
    for (const int id : kf.features.planar_ids) {
      const std::size_t slot = kf.map_begin + static_cast<std::size_t>(id);
      if (!usable(slot)) continue;
      plane.push_back(map.points[slot]);
      plane_slots.push_back(slot);
      plane_tags.push_back(static_cast<long>(kf.id) * 1024 + kf.rings[static_cast<std::size_t>(id)]);
    }
  }

  PointCloud edge_ds;
  for (const int i : voxel_downsample_ids(edge, edge_leaf)) {
    edge_ds.push_back(edge[static_cast<std::size_t>(i)]);
    sm.edge_map_ids.push_back(edge_slots[static_cast<std::size_t>(i)]);
    sm.index.edge_sources.push_back(edge_tags[static_cast<std::size_t>(i)]);
  }
  PointCloud plane_ds;
  for (const int i : voxel_downsample_ids(plane, plane_leaf)) {
    plane_ds.push_back(plane[static_cast<std::size_t>(i)]);
    sm.plane_map_ids.push_back(plane_slots[static_cast<std::size_t>(i)]);
    sm.index.plane_sources.push_back(plane_tags[static_cast<std::size_t>(i)]);
  }
  sm.index.edge = KdTree(std::move(edge_ds));
  sm.index.plane = KdTree(std::move(plane_ds));
  return sm;
}

bool should_create_keyframe(const Pose& pred, const Pose& last_kf, const KeyframeGates& gates) {
  const PoseDistance d = pose_distance(pred, last_kf);
  return d.translation > gates.translation || d.rotation > gates.rotation;
}

Pose compose_odometry(const Pose& prev, const Pose& delta) { return prev * delta; }

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

FeatureSet downsample_features(const FeatureSet& fs, const PointCloud& cloud, double edge_leaf,
                               double plane_leaf) {
  FeatureSet out;
  out.sparse_rings = fs.sparse_rings;
  for (const int i : voxel_downsample_ids(fs.edge, edge_leaf)) {
    out.edge_ids.push_back(fs.edge_ids[static_cast<std::size_t>(i)]);
  }
  for (const int i : voxel_downsample_ids(fs.planar, plane_leaf)) {
    out.planar_ids.push_back(fs.planar_ids[static_cast<std::size_t>(i)]);
  }
  for (const int id : out.edge_ids) out.edge.push_back(cloud[static_cast<std::size_t>(id)]);
  for (const int id : out.planar_ids) out.planar.push_back(cloud[static_cast<std::size_t>(id)]);
  return out;
}

FeatureSet filter_features(const FeatureSet& fs, const std::vector<char>& keep) {
  FeatureSet out;
  out.sparse_rings = fs.sparse_rings;
  for (std::size_t k = 0; k < fs.edge_ids.size(); ++k) {
    if (keep[static_cast<std::size_t>(fs.edge_ids[k])]) {
      out.edge_ids.push_back(fs.edge_ids[k]);
      out.edge.push_back(fs.edge[k]);
    }
  }
  for (std::size_t k = 0; k < fs.planar_ids.size(); ++k) {
    if (keep[static_cast<std::size_t>(fs.planar_ids[k])]) {
      out.planar_ids.push_back(fs.planar_ids[k]);
      out.planar.push_back(fs.planar[k]);
    }
  }
  return out;
}

bool removes_first(RemovalMode m) {
  return m == RemovalMode::First || m == RemovalMode::FirstAndAfter;
}

bool removes_after(RemovalMode m) {
  return m == RemovalMode::After || m == RemovalMode::FirstAndAfter;
}

Resolution resolution_for(double dp, double dtheta, const RemovalParams& prm) {
  return finalize_resolution(predict_resolution(dp, dtheta, prm), prm);
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  if (config_.max_rounds < 1) {
    throw Error(ErrorCode::InvalidArgument, "max rounds must be at least 1");
  }
  if (config_.window < 1) {
    throw Error(ErrorCode::InvalidArgument, "submap window must hold at least one keyframe");
  }
}

void Pipeline::bootstrap(std::span<const ImuSample> imu) {
  if (imu.empty()) {
    throw Error(ErrorCode::EmptyInterval, "no IMU samples");
  }
  const double t0 = imu.front().t;
  Vec3 acc = Vec3::Zero();
  Vec3 gyr = Vec3::Zero();
  int n = 0;
  for (const ImuSample& s : imu) {
    if (s.t > t0 + config_.bootstrap_duration) break;
    acc += s.accel;
    gyr += s.gyro;
    ++n;
  }
  acc /= n;
  gyr /= n;
  // At rest the specific force points opposite to gravity; level it with zero yaw.
  const Vec3 up = -config_.noise.gravity.normalized();
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(acc.normalized(), up);
  state_ = NavState{};
  state_.rotation = Rotation(q);
  state_.bias.gyro = gyr;
  state_.t = t0;
  initialized_ = true;
}

std::size_t Pipeline::window_begin() const {
  const auto w = window();
  return w.empty() ? map_.size() : w.front().map_begin;
}

std::span<const Keyframe> Pipeline::window() const {
  const std::size_t n = std::min(keyframes_.size(), static_cast<std::size_t>(config_.window));
  return std::span<const Keyframe>(keyframes_).subspan(keyframes_.size() - n, n);
}

PointCloud Pipeline::window_points(std::vector<std::size_t>& slots) const {
  PointCloud out;
  slots.clear();
  for (std::size_t s = window_begin(); s < map_.size(); ++s) {
    if (map_.alive[s]) {
      out.push_back(map_.points[s]);
      slots.push_back(s);
    }
  }
  return out;
}

Pipeline::Comparison Pipeline::compare_with_window(const PointCloud& scan_world,
                                                   const Pose& origin, Resolution res) const {
  Comparison c;
  const PointCloud submap_world = window_points(c.slots);
  if (submap_world.empty() || scan_world.empty()) {
    return c;
  }
  const GroundFilter ground{-config_.sensor_height, config_.removal.ground_exclusion_height};
  try {
    c.scan_img = build_range_image(scan_world, origin, res, config_.fov, ground);
    c.map_img = build_range_image(submap_world, origin, res, config_.fov, ground);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyCloud) return c;
    throw;
  }
  c.diff = diff_range_images(c.scan_img, c.map_img);
  c.cls = classify_dynamic(c.diff, c.scan_img, c.map_img, config_.removal);
  c.valid = true;
  return c;
}

void Pipeline::classify_against_window(const PointCloud& scan_world, const Pose& origin,
                                       Resolution res, std::vector<char>& scan_keep,
                                       std::vector<char>& window_keep, int& scan_flagged,
                                       int& window_flagged) const {
  scan_flagged = 0;
  window_flagged = 0;
  const Comparison c = compare_with_window(scan_world, origin, res);
  if (!c.valid) {
    return;
  }
  const std::size_t base = window_begin();
  for (const int id : c.cls.scan_dynamic_ids) {
    char& k = scan_keep[static_cast<std::size_t>(id)];
    scan_flagged += k != 0;
    k = 0;
  }
  for (const int id : c.cls.submap_dynamic_ids) {
    char& k = window_keep[c.slots[static_cast<std::size_t>(id)] - base];
    window_flagged += k != 0;
    k = 0;
  }
}

int Pipeline::finalize_keyframe(Keyframe& kf, const std::vector<char>& scan_keep, bool fine_pass) {
  std::vector<char> keep = scan_keep;
  int flagged = 0;
  if (fine_pass && !keyframes_.empty()) {
    const std::size_t base = window_begin();
    std::vector<char> window_keep(map_.size() - base, 1);
    int fs = 0;
    int fw = 0;
    classify_against_window(transform_cloud(kf.full_scan, kf.pose), kf.pose,
                            Resolution{config_.removal.r0}, keep, window_keep, fs, fw);
    for (std::size_t i = 0; i < window_keep.size(); ++i) {
      if (!window_keep[i]) map_.alive[base + i] = 0;
    }
    flagged = fs + fw;
  }
  kf.map_begin = map_.size();
  const Mat3& r = kf.pose.rotation.matrix();
  for (std::size_t i = 0; i < kf.full_scan.size(); ++i) {
    map_.points.emplace_back(r * kf.full_scan[i] + kf.pose.translation);
    map_.scan_index.push_back(kf.scan_index);
    map_.point_index.push_back(kf.raw_index[i]);
    map_.alive.push_back(keep[i]);
  }
  keyframes_.push_back(std::move(kf));
  return flagged;
}

Pipeline::Prepared Pipeline::prepare(const RawScan& scan, std::span<const ImuSample> imu) const {
  Prepared p;
  const double t_end = scan.stamp + config_.sweep_period;

  // IMU prediction to the sweep end.
  auto t0 = Clock::now();
  p.prev = state_;
  p.slice = slice_imu(imu, p.prev.t, t_end);
  p.delta = preintegrate(p.slice, p.prev.bias, config_.noise);
  p.pred = predict_state(p.prev, p.delta, config_.noise);
  p.predict_ms = ms_since(t0);

  // Motion compensation with the dead-reckoned track.
  t0 = Clock::now();
  MotionTrack track;
  for (const NavState& s : integrate_states(p.prev, p.slice, config_.noise)) {
    if (track.empty() || s.t > track.end_time()) track.add(s.t, s.pose());
  }
  const PointCloud deskewed = deskew(scan, track, config_.sweep_period);
  p.cloud.reserve(deskewed.size());
  for (std::size_t i = 0; i < deskewed.size(); ++i) {
    if (scan.points[i].xyz.norm() < config_.min_range) continue;
    p.cloud.push_back(deskewed[i]);
    p.rings.push_back(scan.points[i].ring);
    p.raw_index.push_back(static_cast<int>(i));
  }
  p.deskew_ms = ms_since(t0);

  t0 = Clock::now();
  p.features = downsample_features(extract_features(p.cloud, p.rings, config_.features), p.cloud,
                                   config_.edge_leaf, config_.plane_leaf);
  p.features_ms = ms_since(t0);
  return p;
}

Resolution Pipeline::initial_resolution(const Prepared& p) const {
  const PoseErrorNorms err =
      predicted_pose_error(seed_error(last_error_, last_delta_), p.prev, p.slice, config_.noise);
  return resolution_for(err.dp_norm, err.dtheta_norm, config_.removal);
}

RemovalPreview Pipeline::preview_removal(const RawScan& scan, std::span<const ImuSample> imu) const {
  if (!initialized_ || keyframes_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "preview needs at least one processed sweep");
  }
  const Prepared p = prepare(scan, imu);
  RemovalPreview out;
  out.resolution = initial_resolution(p);
  out.origin = p.pred.pose();
  Comparison c = compare_with_window(transform_cloud(p.cloud, out.origin), out.origin, out.resolution);
  if (!c.valid) {
    throw Error(ErrorCode::EmptyCloud, "nothing to compare in the field of view");
  }
  out.scan_image = std::move(c.scan_img);
  out.map_image = std::move(c.map_img);
  out.diff = std::move(c.diff);
  out.classes = std::move(c.cls);
  for (int& id : out.classes.scan_dynamic_ids) id = p.raw_index[static_cast<std::size_t>(id)];
  return out;
}

ScanRecord Pipeline::process_scan(const RawScan& scan, std::span<const ImuSample> imu) {
  const auto t_total = Clock::now();
  ScanRecord rec;
  rec.scan_index = scan_counter_++;
  if (!initialized_) {
    bootstrap(imu);
  }
  const double t_end = scan.stamp + config_.sweep_period;
  rec.stamp = t_end;

  Prepared prep = prepare(scan, imu);
  rec.timings.predict_ms = prep.predict_ms;
  rec.timings.deskew_ms = prep.deskew_ms;
  rec.timings.features_ms = prep.features_ms;
  const NavState& prev = prep.prev;
  const NavState& pred = prep.pred;
  const PreintegratedDelta& delta = prep.delta;
  const PointCloud& cloud = prep.cloud;
  const std::vector<int>& rings = prep.rings;
  const std::vector<int>& raw_index = prep.raw_index;
  const FeatureSet& features = prep.features;
  rec.scan_points = static_cast<int>(cloud.size());
  auto t0 = Clock::now();

  auto make_keyframe = [&](const NavState& st) {
    Keyframe kf;
    kf.id = static_cast<int>(keyframes_.size());
    kf.scan_index = rec.scan_index;
    kf.stamp = t_end;
    kf.pose = st.pose();
    kf.state = st;
    kf.features = features;
    kf.full_scan = cloud;
    kf.rings = rings;
    kf.raw_index = raw_index;
    return kf;
  };

  if (keyframes_.empty()) {
    state_ = pred;
    last_error_ = PreintegrationError{};
    last_delta_ = delta;
    last_delta_.covariance.setZero();
    Keyframe kf = make_keyframe(state_);
    kf.low_confidence = false;
    t0 = Clock::now();
    finalize_keyframe(kf, std::vector<char>(cloud.size(), 1), false);
    rec.timings.finalize_ms = ms_since(t0);
    rec.status = ScanStatus::Bootstrap;
    rec.keyframe = true;
    rec.keyframe_id = keyframes_.back().id;
    rec.pose = state_.pose();
    rec.edge_features = static_cast<int>(features.edge.size());
    rec.planar_features = static_cast<int>(features.planar.size());
    rec.timings.total_ms = ms_since(t_total);
    records_.push_back(rec);
    return rec;
  }

  const bool first = removes_first(config_.mode);
  const int rounds = first ? config_.max_rounds : 1;
  Resolution res = initial_resolution(prep);

  const std::span<const Keyframe> win = window();
  const std::size_t base = window_begin();
  const PointCloud scan_pred_world = transform_cloud(cloud, pred.pose());

  std::vector<char> scan_keep;
  std::vector<char> window_keep;
  bool accepted = false;
  MatchResult match;
  double score = std::numeric_limits<double>::infinity();
  for (int round = 0; round < rounds && !accepted; ++round) {
    rec.rounds = round + 1;
    rec.resolutions.push_back(res.rad_per_pixel);
    scan_keep.assign(cloud.size(), 1);
    window_keep.assign(map_.size() - base, 1);
    t0 = Clock::now();
    if (first) {
      classify_against_window(scan_pred_world, pred.pose(), res, scan_keep, window_keep,
                              rec.removed_scan, rec.removed_submap);
    }
    rec.timings.removal_ms += ms_since(t0);

    t0 = Clock::now();
    const Submap submap = build_submap(win, map_, config_.edge_leaf, config_.plane_leaf,
                                       first ? &window_keep : nullptr);
    const FeatureSet scan_features = first ? filter_features(features, scan_keep) : features;
    rec.edge_features = static_cast<int>(scan_features.edge.size());
    rec.planar_features = static_cast<int>(scan_features.planar.size());
    bool matched = false;
    try {
      match = scan_match(scan_features, submap.index, pred.pose(), prev.pose(), config_.matching);
      matched = true;
    } catch (const Error& e) {
      const ErrorCode c = e.code();
      if (c != ErrorCode::InsufficientCorrespondences && c != ErrorCode::SingularNormalEquations &&
          c != ErrorCode::EmptyIndex) {
        throw;
      }
    }
    if (matched) {
      score = convergence_score(transform_cloud(scan_features.edge, match.pose), submap.index.edge,
                                config_.tau_d);
      rec.match_iterations += match.iterations;
      accepted = !first || is_convergent(score, config_.score0);
    }
    rec.timings.matching_ms += ms_since(t0);
    if (!matched) {
      break;  // another round at a different resolution cannot create correspondences
    }
    if (!accepted) {
      // Lidar-odometry disagreement with the prediction sets the next resolution.
      const PoseDistance d = pose_distance(match.pose, pred.pose());
      res = resolution_for(d.translation, d.rotation, config_.removal);
    }
  }

  NavState next = pred;
  if (accepted) {
    const double dt = t_end - prev.t;
    next.velocity += config_.velocity_gain * (match.pose.translation - pred.position) / dt;
    next.rotation = match.pose.rotation;
    next.position = match.pose.translation;
    rec.status = ScanStatus::Accepted;
    // With a fine pass to follow, round flags only mask the match submap.
    if (first && !removes_after(config_.mode)) {
      for (std::size_t i = 0; i < window_keep.size(); ++i) {
        if (!window_keep[i]) map_.alive[base + i] = 0;
      }
    }
  }
  if (!accepted || removes_after(config_.mode)) {
    if (!accepted) rec.status = ScanStatus::LowConfidence;
    scan_keep.assign(cloud.size(), 1);
  }
  rec.score = score;
  last_error_ = preintegration_error(prev, next, delta, config_.noise);
  last_delta_ = delta;
  state_ = next;
  rec.pose = state_.pose();

  t0 = Clock::now();
  if (should_create_keyframe(state_.pose(), keyframes_.back().pose, config_.gates)) {
    Keyframe kf = make_keyframe(state_);
    kf.low_confidence = !accepted;
    kf.score = score;
    rec.removed_final = finalize_keyframe(kf, scan_keep, removes_after(config_.mode));
    rec.keyframe = true;
    rec.keyframe_id = keyframes_.back().id;
  }
  rec.timings.finalize_ms = ms_since(t0);
  rec.timings.total_ms = ms_since(t_total);
  records_.push_back(rec);
  return rec;
}

}  // namespace vislio
