#include "vislio/evaluation.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vislio/errors.hpp"

namespace vislio {

AteResult ate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const TimedPose& e : est) {
    auto it = std::lower_bound(gt.begin(), gt.end(), e.t,
                               [](const TimedPose& p, double t) { return p.t < t; });
    const TimedPose* best = nullptr;
    if (it != gt.end()) best = &*it;
    if (it != gt.begin()) {
      const TimedPose* prev = &*(it - 1);
      if (!best || std::abs(prev->t - e.t) <= std::abs(best->t - e.t)) best = prev;
    }
    if (best && std::abs(best->t - e.t) <= max_dt) {
      src.push_back(e.pose.translation);
      dst.push_back(best->pose.translation);
    }
  }
  if (src.size() < 2) {
    throw Error(ErrorCode::NoOverlap, "fewer than two poses associate in time");
  }
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix3Xd a(3, n);
  Eigen::Matrix3Xd b(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.col(i) = src[static_cast<std::size_t>(i)];
    b.col(i) = dst[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, false);
  AteResult r;
  r.alignment = Pose(Rotation(Mat3(t.topLeftCorner<3, 3>())), t.topRightCorner<3, 1>());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sum += (b.col(i) - (r.alignment.rotation * Vec3(a.col(i)) + r.alignment.translation)).squaredNorm();
  }
  r.rmse = std::sqrt(sum / static_cast<double>(n));
  r.matched = static_cast<int>(n);
  return r;
}

double removal_rate(long baseline_dynamic, long residual_dynamic) {
  if (baseline_dynamic <= 0) {
    throw Error(ErrorCode::ZeroBaseline, "baseline has no dynamic points");
  }
  return 100.0 * (1.0 - static_cast<double>(residual_dynamic) / static_cast<double>(baseline_dynamic));
}

long LabeledMap::count(bool dynamic_label, bool alive_state) const {
  long n = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if ((dynamic[i] != 0) == dynamic_label && (alive[i] != 0) == alive_state) ++n;
  }
  return n;
}

LabeledMap label_map(const PointMap& map, const std::vector<std::vector<char>>& labels) {
  LabeledMap out;
  out.points = map.points;
  out.alive = map.alive;
  out.dynamic.assign(map.size(), 0);
  if (labels.empty()) {
    return out;
  }
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto s = static_cast<std::size_t>(map.scan_index[i]);
    const auto p = static_cast<std::size_t>(map.point_index[i]);
    if (s >= labels.size() || p >= labels[s].size()) {
      throw Error(ErrorCode::InvalidArgument, "map point without a label");
    }
    out.dynamic[i] = labels[s][p];
  }
  return out;
}

RemovalStats removal_stats(const LabeledMap& map) {
  RemovalStats s;
  s.dynamic_residual = map.count(true, true);
  s.dynamic_total = s.dynamic_residual + map.count(true, false);
  s.static_removed = map.count(false, false);
  s.static_total = s.static_removed + map.count(false, true);
  s.rate_vs_truth = removal_rate(s.dynamic_total, s.dynamic_residual);
  s.static_removed_pct =
      s.static_total > 0 ? 100.0 * static_cast<double>(s.static_removed) / static_cast<double>(s.static_total)
                         : 0.0;
  return s;
}

double rate_vs_baseline(const LabeledMap& baseline, const LabeledMap& cleaned) {
  return removal_rate(baseline.count(true, true), cleaned.count(true, true));
}

void write_map_ply(const LabeledMap& map, std::ostream& os) {
  os << "ply\nformat ascii 1.0\nelement vertex " << map.points.size()
     << "\nproperty double x\nproperty double y\nproperty double z\n"
        "property uchar label\nproperty uchar alive\nend_header\n";
  char buf[128];
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    const Vec3& p = map.points[i];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d\n", p.x(), p.y(), p.z(),
                  static_cast<int>(map.dynamic[i]), static_cast<int>(map.alive[i]));
    os << buf;
  }
}

void write_map_ply(const LabeledMap& map, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
  write_map_ply(map, os);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
}

LabeledMap read_map_ply(const std::filesystem::path& file) {
  std::ifstream is(file);
  const std::string src = file.string();
  if (!is) throw Error(ErrorCode::FormatError, src + ": missing or unreadable");
  std::string line;
  long vertices = -1;
  std::size_t n = 0;
  bool header_done = false;
  while (std::getline(is, line)) {
    ++n;
    if (n == 1 && line != "ply") throw Error(ErrorCode::FormatError, src + ":1: not a PLY file");
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "element") {
      std::string kind;
      ss >> kind >> vertices;
    } else if (word == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done || vertices < 0) {
    throw Error(ErrorCode::FormatError, src + ": incomplete PLY header");
  }
  LabeledMap map;
  for (long v = 0; v < vertices; ++v) {
    if (!std::getline(is, line)) {
      throw Error(ErrorCode::FormatError, src + ": expected " + std::to_string(vertices) + " vertices");
    }
    ++n;
    std::istringstream ss(line);
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    int label = 0;
    int alive = 0;
    if (!(ss >> x >> y >> z >> label >> alive)) {
      throw Error(ErrorCode::FormatError, src + ":" + std::to_string(n) + ": malformed vertex");
    }
    map.points.emplace_back(x, y, z);
    map.dynamic.push_back(label != 0);
    map.alive.push_back(alive != 0);
  }
  return map;
}

Trajectory trajectory_of(const std::vector<ScanRecord>& records) {
  Trajectory t;
  t.reserve(records.size());
  for (const ScanRecord& r : records) t.push_back({r.stamp, r.pose});
  return t;
}

}  // namespace vislio
