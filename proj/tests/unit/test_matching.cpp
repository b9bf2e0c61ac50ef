#include <doctest.h>

#include <random>

#include "scene_support.hpp"
#include "support.hpp"
#include "vislio/errors.hpp"
#include "vislio/matching.hpp"

using namespace vislio;

namespace {

// Central differences of a distance under p -> Exp(dtheta) p + dt.
template <typename Fn>
Vec6 numeric_jacobian(const Vec3& p, Fn&& dist) {
  Vec6 j;
  const double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    Vec6 xi = Vec6::Zero();
    xi[k] = h;
    const Vec3 plus = so3_exp(xi.head<3>()) * p + xi.tail<3>();
    const Vec3 minus = so3_exp(-xi.head<3>()) * p - xi.tail<3>();
    j[k] = (dist(plus) - dist(minus)) / (2 * h);
  }
  return j;
}

double rel_err(const Vec6& a, const Vec6& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST_CASE("edge residual values") {
  CHECK(edge_residual(Vec3(0.3, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)).distance == 0.0);
  CHECK(edge_residual(Vec3(0.5, 1, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)).distance == doctest::Approx(1.0));
  try {
    edge_residual(Vec3(1, 1, 1), Vec3(0, 0, 0), Vec3(1e-7, 0, 0));
    FAIL("expected DegenerateLine");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateLine);
  }
}

TEST_CASE("plane residual values") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK(plane_residual(Vec3(0.2, 0.7, 0), a, b, c).distance == 0.0);
  CHECK(plane_residual(Vec3(0.3, 0.3, 2), a, b, c).distance == doctest::Approx(2.0));
  CHECK(plane_residual(Vec3(0.3, 0.3, -2), Vec3(0, 0, 1), Vec3::Zero()).distance == doctest::Approx(2.0));
  try {
    plane_residual(Vec3(1, 1, 1), a, b, Vec3(2, 0, 0));
    FAIL("expected DegeneratePlane");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegeneratePlane);
  }
}

TEST_CASE("residual Jacobians match central differences") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = vislio::testing::random_vec(rng, 10.0);
    const Vec3 b = a + vislio::testing::random_unit(rng) * 2.0;
    const Vec3 c = a + vislio::testing::random_unit(rng) * 2.0;
    const Vec3 p = vislio::testing::random_vec(rng, 10.0);
    const Residual re = edge_residual(p, a, b);
    CHECK(rel_err(re.jacobian, numeric_jacobian(p, [&](const Vec3& q) { return edge_residual(q, a, b).distance; })) < 1e-5);
    const Residual rp = plane_residual(p, a, b, c);
    CHECK(rel_err(rp.jacobian, numeric_jacobian(p, [&](const Vec3& q) { return plane_residual(q, a, b, c).distance; })) < 1e-5);
  }
}

TEST_CASE("correspondence gate and exact hits") {
  PointCloud edges, planes;
  for (int i = 0; i < 10; ++i) edges.push_back(Vec3(0, 0, 0.3 * i));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) planes.push_back(Vec3(0.3 * i, 0.3 * j, 0));
  SubmapIndex idx{KdTree(edges), KdTree(planes), {}, {}};
  const Correspondences c =
      find_correspondences({edges[4], Vec3(2, 2, 10)}, {Vec3(0.6, 0.6, 0.05), Vec3(10, 10, 3)}, idx);
  CHECK(c.edges[0].valid);
  CHECK(c.edges[0].j == 4);
  CHECK_FALSE(c.edges[1].valid);
  CHECK(c.planes[0].valid);
  CHECK(std::abs(std::abs(c.planes[0].normal.z()) - 1.0) < 1e-12);
  CHECK_FALSE(c.planes[1].valid);
  CHECK(c.valid_edges() == 1);
  CHECK(c.valid_planes() == 1);

  SubmapIndex none;
  CHECK_THROWS_AS(find_correspondences({Vec3::Zero()}, {}, none), Error);
}

TEST_CASE("plane candidates from one scan line are rejected") {
  PointCloud planes;
  std::vector<long> tags;
  for (int i = 0; i < 6; ++i) {
    planes.push_back(Vec3(0.2 * i, 0, 0));
    tags.push_back(7);
  }
  planes.push_back(Vec3(0.5, 0.05, 0.0));
  tags.push_back(7);
  SubmapIndex idx{KdTree({Vec3(50, 0, 0), Vec3(51, 0, 0)}), KdTree(planes), {}, tags};
  const Correspondences c = find_correspondences({}, {Vec3(0.5, 0.02, 0.1)}, idx);
  CHECK_FALSE(c.planes[0].valid);
  idx.plane_sources.back() = 8;
  // With a second line the fitted plane is z = 0.
  const Correspondences d = find_correspondences({}, {Vec3(0.5, 0.02, 0.1)}, idx);
  REQUIRE(d.planes[0].valid);
  CHECK(std::abs(d.planes[0].normal.z()) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("edge neighbours come from a different scan line") {
  const PointCloud edges{Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0, 0.5)};
  SubmapIndex idx{KdTree(edges), KdTree({Vec3(9, 9, 9)}), {1, 1, 2}, {}};
  const Correspondences c = find_correspondences({Vec3(0.01, 0, 0)}, {}, idx);
  REQUIRE(c.edges[0].valid);
  CHECK(c.edges[0].l == 2);
}

TEST_CASE("neighbour sets equal brute force") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  PointCloud edges, planes;
  for (int i = 0; i < 3000; ++i) edges.push_back(Vec3(u(rng), u(rng), u(rng)));
  for (int i = 0; i < 3000; ++i) planes.push_back(Vec3(u(rng), u(rng), 0.05 * u(rng)));
  SubmapIndex idx{KdTree(edges), KdTree(planes), {}, {}};
  PointCloud qe, qp;
  for (int i = 0; i < 200; ++i) qe.push_back(Vec3(u(rng), u(rng), u(rng)));
  for (int i = 0; i < 200; ++i) qp.push_back(Vec3(u(rng), u(rng), 0.05 * u(rng)));
  const Correspondences c = find_correspondences(qe, qp, idx);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::pair<double, int>> all;
    for (std::size_t k = 0; k < edges.size(); ++k) all.emplace_back((edges[k] - qe[i]).squaredNorm(), static_cast<int>(k));
    std::sort(all.begin(), all.end());
    if (all[0].first <= 1.0) {
      CHECK(c.edges[i].j == all[0].second);
      CHECK(c.edges[i].l == (all[1].first <= 1.0 ? all[1].second : -1));
    } else {
      CHECK_FALSE(c.edges[i].valid);
    }
    std::vector<std::pair<double, int>> pl;
    for (std::size_t k = 0; k < planes.size(); ++k) pl.emplace_back((planes[k] - qp[i]).squaredNorm(), static_cast<int>(k));
    std::sort(pl.begin(), pl.end());
    if (c.planes[i].valid) {
      CHECK(c.planes[i].j == pl[0].second);
      Vec3 mean = Vec3::Zero();
      int n = 0;
      for (int k = 0; k < 5 && pl[k].first <= 1.0; ++k, ++n) mean += planes[pl[k].second];
      CHECK((c.planes[i].centroid - mean / n).norm() < 1e-12);
    }
  }
}

TEST_CASE("scan matching on the static street") {
  const SceneSpec scene = vislio::testing::quiet_scene(false);
  const DriveTrajectory traj(scene.drive);
  std::vector<vislio::testing::TruthSweep> sweeps;
  for (double t : {7.6, 7.8, 8.0}) sweeps.push_back(vislio::testing::truth_sweep(scene, traj, t));
  const SubmapIndex idx = vislio::testing::index_of(sweeps);

  SUBCASE("features taken from the submap are a fixed point") {
    const vislio::testing::TruthSweep& s = sweeps[1];
    const MatchResult r = scan_match(s.features, idx, s.pose, s.pose);
    // Planes are fitted through five neighbours, which need not contain the
    // query where they straddle a crease, so the optimum sits a hair away.
    const PoseDistance d = pose_distance(r.delta_pose, Pose::identity());
    CHECK(d.translation < 1e-4);
    CHECK(d.rotation < 1e-5);
    CHECK(r.final_cost <= r.initial_cost);
    CHECK(r.converged);
  }
  SUBCASE("a perturbed start is recovered") {
    const vislio::testing::TruthSweep s = vislio::testing::truth_sweep(scene, traj, 7.9);
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 dt = vislio::testing::random_unit(rng) * 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
      const Vec3 dr = vislio::testing::random_rotvec(rng, 5.0 * std::numbers::pi / 180.0);
      const Pose init(s.pose.rotation * so3_exp(dr), s.pose.translation + dt);
      const MatchResult r = scan_match(s.features, idx, init);
      const PoseDistance d = pose_distance(r.pose, s.pose);
      CHECK(d.translation < 1e-2);
      CHECK(d.rotation < 0.1 * std::numbers::pi / 180.0);
      // Every accepted step lowered the cost.
      for (const auto& [before, after] : r.steps) CHECK(after <= before);
    }
  }
  SUBCASE("too few features") {
    FeatureSet f;
    for (int i = 0; i < 5; ++i) f.planar.push_back(sweeps[0].features.planar[static_cast<std::size_t>(i)]);
    try {
      scan_match(f, idx, sweeps[0].pose);
      FAIL("expected InsufficientCorrespondences");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientCorrespondences);
    }
  }
}

TEST_CASE("convergence score") {
  const PointCloud sub{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 5, 0)};
  const KdTree tree(sub);
  CHECK(convergence_score(sub, tree, 1.0) == 0.0);
  CHECK(is_convergent(0.0, 0.25));
  const double far = convergence_score({Vec3(0, 0, 10), Vec3(20, 0, 0)}, tree, 1.0);
  CHECK(std::isinf(far));
  CHECK_FALSE(is_convergent(far, 0.25));
  CHECK_FALSE(is_convergent(0.25, 0.25));
  // 0.3 and 0.4 pass the gate, 3.0 does not.
  const double s = convergence_score({Vec3(0.3, 0, 0), Vec3(0, 4.6, 0), Vec3(10, 0, 0)}, tree, 1.0);
  CHECK(s == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(std::isinf(convergence_score({Vec3::Zero()}, KdTree(), 1.0)));
}
