#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "vislio/features.hpp"
#include "vislio/kdtree.hpp"

namespace vislio {

/// Distance of a point to a line or plane and its derivative with respect to a
/// left perturbation (dtheta, dt) of the point: p -> Exp(dtheta) p + dt.
struct Residual {
  double distance = 0.0;
  Vec6 jacobian = Vec6::Zero();
};

/// Point to the infinite line through a and b. Throws DegenerateLine when
/// |a - b| <= 1e-6.
Residual edge_residual(const Vec3& p, const Vec3& a, const Vec3& b);

/// Unsigned point to plane(a, b, c) distance. Throws DegeneratePlane when the
/// triangle area is <= 1e-8 m^2.
Residual plane_residual(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
/// Same for a plane given by unit normal n through on_plane.
Residual plane_residual(const Vec3& p, const Vec3& n, const Vec3& on_plane);

/// Submap feature points with their indices. edge_sources / plane_sources tag
/// every point with the scan line it came from (keyframe id and ring folded
/// into one integer); either may be left empty when that metadata is unknown.
struct SubmapIndex {
  KdTree edge;
  KdTree plane;
  std::vector<long> edge_sources;
  std::vector<long> plane_sources;
};

struct MatchParams {
  double max_correspondence_distance = 1.0;  // m
  int edge_candidates = 5;
  int plane_candidates = 5;
  double plane_max_offset = 0.2;   // m, every candidate must lie this close to the plane
  double plane_min_spread_ratio = 10.0;  // second / smallest covariance eigenvalue
  double huber_delta = 0.1;        // m
  int max_iterations = 30;
  double update_tolerance = 1e-4;  // norm of (dtheta, dt)
  double max_condition = 1e12;
  int min_correspondences = 10;
};

struct EdgeCorrespondence {
  int query = -1;
  int j = -1;
  int l = -1;
  bool valid = false;
};

struct PlaneCorrespondence {
  int query = -1;
  int j = -1;
  int l = -1;
  int m = -1;
  // Least-squares plane through all candidates.
  Vec3 normal = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();
  bool valid = false;
};

struct Correspondences {
  std::vector<EdgeCorrespondence> edges;
  std::vector<PlaneCorrespondence> planes;

  int valid_edges() const;
  int valid_planes() const;
};

/// Nearest-neighbour association of world-frame features. Edge lines use the
/// nearest submap edge point and the closest remaining candidate from a
/// different scan line. Planes use the nearest point plus the pair among the
/// candidates spanning the largest triangle. Anything beyond the gate is
/// invalid. Throws EmptyIndex when a needed index is empty.
Correspondences find_correspondences(const PointCloud& edge_world, const PointCloud& plane_world,
                                     const SubmapIndex& index, const MatchParams& params = {});

struct MatchResult {
  Pose pose;        // world <- scan
  Pose delta_pose;  // reference <- scan
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int edge_inliers = 0;
  int plane_inliers = 0;
  bool converged = false;
  // (cost before, cost after) of every accepted step, both evaluated with the
  // correspondences of that iteration.
  std::vector<std::pair<double, double>> steps;
};

/// Gauss-Newton with Levenberg damping on the Huber-weighted point-to-line and
/// point-to-plane distances. `features` are in the scan frame; `init` maps them
/// to the world. `reference` is the pose delta_pose is expressed against.
MatchResult scan_match(const FeatureSet& features, const SubmapIndex& index, const Pose& init,
                       const Pose& reference = Pose::identity(), const MatchParams& params = {});

/// Mean nearest-neighbour distance of the world-frame edge features whose
/// distance is within tau_d; infinity when none qualifies.
double convergence_score(const PointCloud& edge_world, const KdTree& submap_edges, double tau_d);

inline bool is_convergent(double score, double score0) { return score < score0; }

}  // namespace vislio
