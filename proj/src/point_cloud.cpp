#include "vislio/point_cloud.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_set>

namespace vislio {

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.reserve(cloud.size());
  const Mat3& r = pose.rotation.matrix();
  for (const Vec3& p : cloud) {
    out.emplace_back(r * p + pose.translation);
  }
  return out;
}

std::vector<int> voxel_downsample_ids(const PointCloud& cloud, double leaf) {
  std::vector<int> ids;
  if (leaf <= 0.0) {
    ids.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(cloud.size());
  const double inv = 1.0 / leaf;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud[i];
    // 21 bits per axis covers +-1e5 voxels, far beyond any scene here.
    const auto key_of = [inv](double v) {
      return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(v * inv)) +
                                        (1 << 20)) &
             0x1FFFFF;
    };
    const std::uint64_t key = (key_of(p.x()) << 42) | (key_of(p.y()) << 21) | key_of(p.z());
    if (seen.insert(key).second) {
      ids.push_back(static_cast<int>(i));
    }
  }
  return ids;
}

}  // namespace vislio
