#include "vislio/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "vislio/errors.hpp"

namespace vislio {

void MotionTrack::add(double t, const Pose& pose) {
  if (!times_.empty() && !(t > times_.back())) {
    throw Error(ErrorCode::NonMonotonicTime, "motion samples must be time ordered");
  }
  times_.push_back(t);
  poses_.push_back(pose);
}

double MotionTrack::begin_time() const {
  return times_.empty() ? std::numeric_limits<double>::quiet_NaN() : times_.front();
}

double MotionTrack::end_time() const {
  return times_.empty() ? std::numeric_limits<double>::quiet_NaN() : times_.back();
}

Pose MotionTrack::at(double t) const {
  constexpr double kEps = 1e-9;
  if (times_.empty() || t < times_.front() - kEps || t > times_.back() + kEps) {
    throw Error(ErrorCode::MotionGap, "no motion estimate at t=" + std::to_string(t));
  }
  if (times_.size() == 1 || t <= times_.front()) {
    return poses_.front();
  }
  if (t >= times_.back()) {
    return poses_.back();
  }
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  const double s = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
  return interpolate(poses_[i - 1], poses_[i], s);
}

PointCloud deskew(const RawScan& scan, const MotionTrack& motion, double sweep_period) {
  const Pose end_inv = motion.at(scan.stamp + sweep_period).inverse();
  PointCloud out;
  out.reserve(scan.points.size());
  for (const RawPoint& p : scan.points) {
    const Pose rel = end_inv * motion.at(scan.stamp + p.t_rel);
    out.push_back(rel * p.xyz);
  }
  return out;
}

std::vector<double> ring_roughness(const PointCloud& cloud, std::span<const int> order,
                                   int half_window) {
  const int m = static_cast<int>(order.size());
  std::vector<double> c(order.size(), std::numeric_limits<double>::quiet_NaN());
  for (int k = half_window; k < m - half_window; ++k) {
    const Vec3& pi = cloud[static_cast<std::size_t>(order[k])];
    Vec3 sum = Vec3::Zero();
    for (int j = -half_window; j <= half_window; ++j) {
      if (j != 0) {
        sum += cloud[static_cast<std::size_t>(order[k + j])] - pi;
      }
    }
    c[static_cast<std::size_t>(k)] = sum.norm() / (2.0 * half_window * pi.norm());
  }
  return c;
}

namespace {

enum class Label : unsigned char { None, Excluded, Suppressed, Edge, Planar };

void extract_ring(const PointCloud& cloud, const std::vector<int>& order,
                  const FeatureParams& prm, FeatureSet& out) {
  const int m = static_cast<int>(order.size());
  const int hw = prm.half_window;
  std::vector<double> c = ring_roughness(cloud, order, hw);
  std::vector<Label> label(order.size(), Label::None);
  auto pt = [&](int k) -> const Vec3& { return cloud[static_cast<std::size_t>(order[k])]; };
  auto depth = [&](int k) { return pt(k).norm(); };

  std::vector<bool> adjacent(order.size(), false);  // k and k+1 are beam neighbours
  for (int k = 0; k + 1 < m; ++k) {
    const Vec3& a = pt(k);
    const Vec3& b = pt(k + 1);
    const double cosang = a.dot(b) / (a.norm() * b.norm());
    adjacent[static_cast<std::size_t>(k)] =
        std::acos(std::clamp(cosang, -1.0, 1.0)) <= prm.neighbor_max_angle;
  }

  for (int k = hw; k < m - hw; ++k) {
    for (int j = k - hw; j < k + hw; ++j) {
      if (!adjacent[static_cast<std::size_t>(j)]) {
        label[static_cast<std::size_t>(k)] = Label::Excluded;
        break;
      }
    }
  }

  // Occluded side of depth discontinuities and beams nearly parallel to a surface.
  for (int k = hw; k < m - hw - 1; ++k) {
    if (!adjacent[static_cast<std::size_t>(k)]) continue;
    const double d1 = depth(k);
    const double d2 = depth(k + 1);
    if (d1 - d2 > prm.occlusion_depth_gap) {
      for (int j = std::max(0, k - hw); j <= k; ++j) label[static_cast<std::size_t>(j)] = Label::Excluded;
    } else if (d2 - d1 > prm.occlusion_depth_gap) {
      for (int j = k + 1; j <= std::min(m - 1, k + hw + 1); ++j) label[static_cast<std::size_t>(j)] = Label::Excluded;
    }
  }
  for (int k = hw; k < m - hw; ++k) {
    const double d = depth(k);
    const double diff1 = std::abs(depth(k - 1) - d);
    const double diff2 = std::abs(depth(k + 1) - d);
    if (diff1 > prm.parallel_beam_ratio * d && diff2 > prm.parallel_beam_ratio * d) {
      label[static_cast<std::size_t>(k)] = Label::Excluded;
    }
  }

  const int first = hw;
  const int last = m - hw;  // exclusive
  const int span = last - first;
  for (int s = 0; s < prm.sectors; ++s) {
    const int sb = first + span * s / prm.sectors;
    const int se = first + span * (s + 1) / prm.sectors;
    if (se <= sb) continue;
    std::vector<int> ks;
    for (int k = sb; k < se; ++k) {
      if (label[static_cast<std::size_t>(k)] == Label::None && !std::isnan(c[static_cast<std::size_t>(k)])) {
        ks.push_back(k);
      }
    }
    // Ascending roughness, ties by lower index.
    std::sort(ks.begin(), ks.end(), [&](int a, int b) {
      const double ca = c[static_cast<std::size_t>(a)];
      const double cb = c[static_cast<std::size_t>(b)];
      return ca < cb || (ca == cb && a < b);
    });

    int n_edge = 0;
    for (auto it = ks.rbegin(); it != ks.rend(); ++it) {
      const int k = *it;
      if (c[static_cast<std::size_t>(k)] <= prm.edge_threshold) break;
      if (prm.edge_cap > 0 && n_edge >= prm.edge_cap) break;
      if (label[static_cast<std::size_t>(k)] != Label::None) continue;
      label[static_cast<std::size_t>(k)] = Label::Edge;
      ++n_edge;
      for (int j = std::max(0, k - hw); j <= std::min(m - 1, k + hw); ++j) {
        if (label[static_cast<std::size_t>(j)] == Label::None) label[static_cast<std::size_t>(j)] = Label::Suppressed;
      }
    }

    int n_planar = 0;
    for (const int k : ks) {
      if (c[static_cast<std::size_t>(k)] >= prm.planar_threshold) break;
      if (prm.planar_cap > 0 && n_planar >= prm.planar_cap) break;
      if (label[static_cast<std::size_t>(k)] != Label::None) continue;
      label[static_cast<std::size_t>(k)] = Label::Planar;
      ++n_planar;
      if (prm.planar_cap > 0) {
        for (int j = std::max(0, k - hw); j <= std::min(m - 1, k + hw); ++j) {
          if (label[static_cast<std::size_t>(j)] == Label::None) label[static_cast<std::size_t>(j)] = Label::Suppressed;
        }
      }
    }
  }

  for (int k = 0; k < m; ++k) {
    const int id = order[static_cast<std::size_t>(k)];
    if (label[static_cast<std::size_t>(k)] == Label::Edge) {
      out.edge_ids.push_back(id);
    } else if (label[static_cast<std::size_t>(k)] == Label::Planar) {
      out.planar_ids.push_back(id);
    }
  }
}

}  // namespace

FeatureSet extract_features(const PointCloud& cloud, std::span<const int> rings,
                            const FeatureParams& params) {
  if (rings.size() != cloud.size()) {
    throw Error(ErrorCode::InvalidArgument, "ring labels must match the cloud size");
  }
  std::map<int, std::vector<int>> by_ring;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    by_ring[rings[i]].push_back(static_cast<int>(i));
  }
  FeatureSet out;
  for (const auto& [ring, order] : by_ring) {
    if (static_cast<int>(order.size()) < 2 * params.half_window + 1) {
      ++out.sparse_rings;
      continue;
    }
    extract_ring(cloud, order, params, out);
  }
  std::sort(out.edge_ids.begin(), out.edge_ids.end());
  std::sort(out.planar_ids.begin(), out.planar_ids.end());
  for (const int id : out.edge_ids) out.edge.push_back(cloud[static_cast<std::size_t>(id)]);
  for (const int id : out.planar_ids) out.planar.push_back(cloud[static_cast<std::size_t>(id)]);
  return out;
}

FeatureSet transform_features(const FeatureSet& features, const Pose& pose) {
  FeatureSet out = features;
  out.edge = transform_cloud(features.edge, pose);
  out.planar = transform_cloud(features.planar, pose);
  return out;
}

}  // namespace vislio
