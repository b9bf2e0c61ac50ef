#pragma once

#include <vector>

#include "vislio/geometry.hpp"

namespace vislio {

using PointCloud = std::vector<Vec3>;

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

/// One representative (the first in input order) per occupied voxel. Returns
/// indices into `cloud`, in increasing order.
std::vector<int> voxel_downsample_ids(const PointCloud& cloud, double leaf);

}  // namespace vislio
