#include "vislio/matching.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "vislio/errors.hpp"

namespace vislio {

namespace {

Vec6 point_jacobian(const Vec3& p, const Vec3& grad) {
  Vec6 j;
  j.head<3>() = p.cross(grad);
  j.tail<3>() = grad;
  return j;
}

double huber(double d, double delta) { return d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta); }

double huber_weight(double d, double delta) { return d <= delta ? 1.0 : delta / d; }

}  // namespace

Residual edge_residual(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len = ab.norm();
  if (!(len > 1e-6)) {
    throw Error(ErrorCode::DegenerateLine, "line endpoints coincide");
  }
  const Vec3 u = ab / len;
  const Vec3 ap = p - a;
  const Vec3 w = ap - ap.dot(u) * u;
  Residual r;
  r.distance = w.norm();
  const Vec3 grad = r.distance > 1e-12 ? Vec3(w / r.distance) : Vec3::Zero();
  r.jacobian = point_jacobian(p, grad);
  return r;
}

Residual plane_residual(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n_raw = (b - a).cross(c - a);
  const double twice_area = n_raw.norm();
  if (!(0.5 * twice_area > 1e-8)) {
    throw Error(ErrorCode::DegeneratePlane, "plane points are collinear");
  }
  return plane_residual(p, Vec3(n_raw / twice_area), a);
}

Residual plane_residual(const Vec3& p, const Vec3& n, const Vec3& on_plane) {
  const double s = n.dot(p - on_plane);
  Residual r;
  r.distance = std::abs(s);
  r.jacobian = point_jacobian(p, s >= 0.0 ? n : Vec3(-n));
  return r;
}

int Correspondences::valid_edges() const {
  return static_cast<int>(std::count_if(edges.begin(), edges.end(), [](const auto& c) { return c.valid; }));
}

int Correspondences::valid_planes() const {
  return static_cast<int>(std::count_if(planes.begin(), planes.end(), [](const auto& c) { return c.valid; }));
}

Correspondences find_correspondences(const PointCloud& edge_world, const PointCloud& plane_world,
                                     const SubmapIndex& index, const MatchParams& params) {
  if ((!edge_world.empty() && index.edge.empty()) || (!plane_world.empty() && index.plane.empty())) {
    throw Error(ErrorCode::EmptyIndex, "submap index has no points");
  }
  const double gate_sq = params.max_correspondence_distance * params.max_correspondence_distance;
  const bool tagged = index.edge_sources.size() == index.edge.size() && !index.edge.empty();

  Correspondences out;
  out.edges.resize(edge_world.size());
  for (std::size_t i = 0; i < edge_world.size(); ++i) {
    EdgeCorrespondence& c = out.edges[i];
    c.query = static_cast<int>(i);
    const auto nn = index.edge.knn(edge_world[i], params.edge_candidates);
    if (nn.empty() || nn.front().dist_sq > gate_sq) {
      continue;
    }
    c.j = nn.front().id;
    for (std::size_t k = 1; k < nn.size(); ++k) {
      if (nn[k].dist_sq > gate_sq) break;
      const int id = nn[k].id;
      if (tagged && index.edge_sources[static_cast<std::size_t>(id)] ==
                        index.edge_sources[static_cast<std::size_t>(c.j)]) {
        continue;
      }
      c.l = id;
      break;
    }
    c.valid = c.l >= 0 && (index.edge.point(c.j) - index.edge.point(c.l)).norm() > 1e-6;
  }

  const bool plane_tagged = index.plane_sources.size() == index.plane.size() && !index.plane.empty();
  out.planes.resize(plane_world.size());
  for (std::size_t i = 0; i < plane_world.size(); ++i) {
    PlaneCorrespondence& c = out.planes[i];
    c.query = static_cast<int>(i);
    auto nn = index.plane.knn(plane_world[i], params.plane_candidates);
    while (!nn.empty() && nn.back().dist_sq > gate_sq) nn.pop_back();
    if (nn.size() < 3) {
      continue;
    }
    c.j = nn.front().id;
    const Vec3& pj = index.plane.point(c.j);
    double best = 0.0;
    for (std::size_t a = 1; a < nn.size(); ++a) {
      for (std::size_t b = a + 1; b < nn.size(); ++b) {
        const double area =
            (index.plane.point(nn[a].id) - pj).cross(index.plane.point(nn[b].id) - pj).norm();
        if (area > best) {
          best = area;
          c.l = nn[a].id;
          c.m = nn[b].id;
        }
      }
    }
    if (!(0.5 * best > 1e-8)) {
      continue;
    }
    Vec3 mean = Vec3::Zero();
    for (const Neighbor& q : nn) mean += index.plane.point(q.id);
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const Neighbor& q : nn) {
      const Vec3 d = index.plane.point(q.id) - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    c.normal = eig.eigenvectors().col(0);
    c.centroid = mean;
    // Points along one scan line leave the normal undetermined.
    if (plane_tagged && std::all_of(nn.begin(), nn.end(), [&](const Neighbor& q) {
          return index.plane_sources[static_cast<std::size_t>(q.id)] ==
                 index.plane_sources[static_cast<std::size_t>(c.j)];
        })) {
      continue;
    }
    if (eig.eigenvalues()(1) < params.plane_min_spread_ratio * eig.eigenvalues()(0)) continue;
    c.valid = std::all_of(nn.begin(), nn.end(), [&](const Neighbor& q) {
      return std::abs(c.normal.dot(index.plane.point(q.id) - mean)) <= params.plane_max_offset;
    });
  }
  return out;
}

namespace {

struct Linearization {
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  double cost = 0.0;
};

template <typename Fn>
void for_each_residual(const PointCloud& edge_w, const PointCloud& plane_w,
                       const Correspondences& corr, const SubmapIndex& index, Fn&& fn) {
  for (const EdgeCorrespondence& c : corr.edges) {
    if (c.valid) {
      fn(edge_residual(edge_w[static_cast<std::size_t>(c.query)], index.edge.point(c.j),
                       index.edge.point(c.l)));
    }
  }
  for (const PlaneCorrespondence& c : corr.planes) {
    if (c.valid) {
      fn(plane_residual(plane_w[static_cast<std::size_t>(c.query)], c.normal, c.centroid));
    }
  }
}

Linearization linearize(const PointCloud& edge_w, const PointCloud& plane_w,
                        const Correspondences& corr, const SubmapIndex& index, double delta) {
  Linearization lin;
  for_each_residual(edge_w, plane_w, corr, index, [&](const Residual& r) {
    const double w = huber_weight(r.distance, delta);
    lin.h.noalias() += w * r.jacobian * r.jacobian.transpose();
    lin.g.noalias() += w * r.distance * r.jacobian;
    lin.cost += huber(r.distance, delta);
  });
  return lin;
}

double evaluate_cost(const PointCloud& edge_w, const PointCloud& plane_w,
                     const Correspondences& corr, const SubmapIndex& index, double delta) {
  double cost = 0.0;
  for_each_residual(edge_w, plane_w, corr, index,
                    [&](const Residual& r) { cost += huber(r.distance, delta); });
  return cost;
}

}  // namespace

MatchResult scan_match(const FeatureSet& features, const SubmapIndex& index, const Pose& init,
                       const Pose& reference, const MatchParams& params) {
  Pose pose = init;
  double lambda = 0.0;
  MatchResult res;
  PointCloud edge_w = transform_cloud(features.edge, pose);
  PointCloud plane_w = transform_cloud(features.planar, pose);

  auto associate = [&]() {
    Correspondences corr = find_correspondences(edge_w, plane_w, index, params);
    if (corr.valid_edges() + corr.valid_planes() < params.min_correspondences) {
      throw Error(ErrorCode::InsufficientCorrespondences,
                  std::to_string(corr.valid_edges() + corr.valid_planes()) +
                      " valid correspondences");
    }
    return corr;
  };

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    const Correspondences corr = associate();
    const Linearization lin = linearize(edge_w, plane_w, corr, index, params.huber_delta);
    if (iter == 0) {
      res.initial_cost = lin.cost;
    }
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(lin.h, Eigen::EigenvaluesOnly);
    const double ev_min = eig.eigenvalues().minCoeff();
    const double ev_max = eig.eigenvalues().maxCoeff();
    if (!(ev_min > 0.0) || ev_max / ev_min > params.max_condition) {
      throw Error(ErrorCode::SingularNormalEquations, "normal equations are ill-conditioned");
    }

    bool accepted = false;
    Vec6 xi = Vec6::Zero();
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Mat6 a = lin.h;
      a.diagonal() *= 1.0 + lambda;
      xi = a.ldlt().solve(-lin.g);
      const Pose candidate = retract_left(pose, xi);
      PointCloud ew = transform_cloud(features.edge, candidate);
      PointCloud pw = transform_cloud(features.planar, candidate);
      const double cost = evaluate_cost(ew, pw, corr, index, params.huber_delta);
      if (cost <= lin.cost) {
        res.steps.emplace_back(lin.cost, cost);
        pose = candidate;
        edge_w = std::move(ew);
        plane_w = std::move(pw);
        lambda = lambda < 1e-6 ? 0.0 : 0.1 * lambda;
        accepted = true;
      } else {
        lambda = lambda == 0.0 ? 1e-4 : 10.0 * lambda;
      }
    }
    res.iterations = iter + 1;
    if (!accepted || xi.norm() < params.update_tolerance) {
      // No descent left for these correspondences, or the step is negligible.
      res.converged = true;
      break;
    }
  }

  const Correspondences corr = associate();
  res.final_cost = evaluate_cost(edge_w, plane_w, corr, index, params.huber_delta);
  res.edge_inliers = corr.valid_edges();
  res.plane_inliers = corr.valid_planes();
  res.pose = pose;
  res.delta_pose = reference.inverse() * pose;
  return res;
}

double convergence_score(const PointCloud& edge_world, const KdTree& submap_edges, double tau_d) {
  double sum = 0.0;
  int count = 0;
  for (const Vec3& p : edge_world) {
    const Neighbor nn = submap_edges.nearest(p);
    if (nn.id < 0) continue;
    const double d = std::sqrt(nn.dist_sq);
    if (d <= tau_d) {
      sum += d;
      ++count;
    }
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::infinity();
}

}  // namespace vislio
