#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "classify_oracle.hpp"
#include "support.hpp"
#include "vislio/errors.hpp"
#include "vislio/range_image.hpp"
#include "vislio/simworld.hpp"

using namespace vislio;

namespace {

const RemovalParams kDefaults;

Vec3 spherical(double range, double az, double el) {
  return range * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

}  // namespace

TEST_CASE("predict_resolution") {
  CHECK(predict_resolution(0.0, 0.0, kDefaults).rad_per_pixel == 0.0);
  CHECK(predict_resolution(0.1, 0.01, kDefaults).rad_per_pixel == doctest::Approx(0.02).epsilon(1e-15));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double dp = u(rng), dt = u(rng), e = u(rng) * 0.1;
    const double r = predict_resolution(dp, dt, kDefaults).rad_per_pixel;
    CHECK(predict_resolution(dp + e, dt, kDefaults).rad_per_pixel >= r);
    CHECK(predict_resolution(dp, dt + e, kDefaults).rad_per_pixel >= r);
  }
}

TEST_CASE("finalize_resolution") {
  CHECK(finalize_resolution({0.005}, kDefaults).rad_per_pixel == 0.02);
  CHECK(finalize_resolution({0.02}, kDefaults).rad_per_pixel == 0.04);
  CHECK(resolution_floor_from_sensor(30.0 * std::numbers::pi / 180.0, 16) ==
        doctest::Approx(0.0327).epsilon(1e-3));
  CHECK_THROWS_AS(resolution_floor_from_sensor(0.5, 0), Error);
}

TEST_CASE("single point lands in the azimuth-zero, elevation-zero pixel") {
  const Resolution res{0.02};
  const FieldOfView fov;
  const RangeImage img = build_range_image({Vec3(10, 0, 0)}, Pose::identity(), res, fov);
  const int col = static_cast<int>(std::floor(std::numbers::pi / 0.02));
  const int row = static_cast<int>(std::floor((std::numbers::pi / 12) / 0.02));
  CHECK(img.range(row, col) == doctest::Approx(10.0));
  REQUIRE(img.point_ids(row, col).size() == 1);
  CHECK(img.pixel_of_point()[0] == img.pixel_index(row, col));
}

TEST_CASE("pixel keeps the minimum range") {
  const RangeImage img = build_range_image({Vec3(8, 0, 0), Vec3(5, 0, 0)}, Pose::identity(),
                                           {0.02}, FieldOfView{});
  const int pix = img.pixel_of_point()[0];
  CHECK(img.pixel_of_point()[1] == pix);
  CHECK(img.range_at(pix) == 5.0);
  CHECK(img.ids_at(pix).size() == 2);
}

TEST_CASE("range image equals brute-force binning") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> ur(1.0, 50.0), ua(-std::numbers::pi, std::numbers::pi),
      ue(-0.25, 0.25);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i) cloud.push_back(spherical(ur(rng), ua(rng), ue(rng)));
  const Pose origin(so3_exp(Vec3(0.05, -0.02, 1.0)), Vec3(3, -2, 0.5));
  for (Vec3& p : cloud) p = origin * p;
  const FieldOfView fov;
  const double res = 0.03;
  const RangeImage img = build_range_image(cloud, origin, {res}, fov);
  const auto polar = vislio::testing::to_polar(cloud, origin, res, fov, -1e9);
  std::map<int, double> mins;
  std::map<int, int> counts;
  for (const auto& p : polar) {
    if (p.pixel < 0) continue;
    auto [it, fresh] = mins.emplace(p.pixel, p.range);
    if (!fresh) it->second = std::min(it->second, p.range);
    ++counts[p.pixel];
  }
  int occupied = 0;
  for (int pix = 0; pix < img.width() * img.height(); ++pix) {
    const auto it = mins.find(pix);
    if (it == mins.end()) {
      CHECK(img.empty_at(pix));
    } else {
      ++occupied;
      CHECK(img.range_at(pix) == it->second);
      CHECK(static_cast<int>(img.ids_at(pix).size()) == counts[pix]);
    }
  }
  CHECK(occupied == static_cast<int>(mins.size()));
}

TEST_CASE("range image size and errors") {
  const FieldOfView fov;
  const auto [w, h] = range_image_size(fov, {2.0 * std::numbers::pi / 100.0});
  CHECK(w == 100);
  CHECK(h == 9);
  CHECK_THROWS_AS(build_range_image({Vec3(1, 0, 0)}, Pose::identity(), {0.0}, fov), Error);
  // Everything straight up falls outside the vertical field of view.
  try {
    build_range_image({Vec3(0, 0, 5)}, Pose::identity(), {0.02}, fov);
    FAIL("expected EmptyCloud");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCloud);
  }
}

TEST_CASE("ground band shapes ranges but is not classifiable") {
  const GroundFilter ground{0.0, 0.5};
  const Pose origin(Rotation::identity(), Vec3(0, 0, 1.8));
  const RangeImage img =
      build_range_image({Vec3(10, 0, 0.2), Vec3(10, 0, 1.8)}, origin, {0.02}, FieldOfView{}, ground);
  CHECK_FALSE(img.classifiable(0));
  CHECK(img.classifiable(1));
  CHECK_FALSE(img.empty_at(img.pixel_of_point()[0]));
}

TEST_CASE("diff image") {
  const FieldOfView fov;
  const RangeImage a = build_range_image({Vec3(5, 0, 0), Vec3(0, 7, 0)}, Pose::identity(), {0.02}, fov);
  const RangeImage b = build_range_image({Vec3(10, 0, 0), Vec3(0, -7, 0)}, Pose::identity(), {0.02}, fov);
  const DiffImage same = diff_range_images(a, a);
  for (double v : same.values) CHECK((DiffImage::undefined(v) || v == 0.0));
  const DiffImage d = diff_range_images(a, b);
  int defined = 0;
  for (std::size_t p = 0; p < d.values.size(); ++p) {
    const int pix = static_cast<int>(p);
    const bool both = !a.empty_at(pix) && !b.empty_at(pix);
    CHECK(both != DiffImage::undefined(d.values[p]));
    if (both) {
      ++defined;
      CHECK(d.values[p] == -5.0);
    }
  }
  CHECK(defined == 1);
  const RangeImage other = build_range_image({Vec3(5, 0, 0)}, Pose::identity(), {0.03}, fov);
  CHECK_THROWS_AS(diff_range_images(a, other), Error);
}

TEST_CASE("diff undefined exactly where either side is empty") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ur(1.0, 30.0), ua(-3.1, 3.1), ue(-0.2, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud a, b;
    for (int i = 0; i < 300; ++i) a.push_back(spherical(ur(rng), ua(rng), ue(rng)));
    for (int i = 0; i < 300; ++i) b.push_back(spherical(ur(rng), ua(rng), ue(rng)));
    const RangeImage ia = build_range_image(a, Pose::identity(), {0.05}, FieldOfView{});
    const RangeImage ib = build_range_image(b, Pose::identity(), {0.05}, FieldOfView{});
    const DiffImage d = diff_range_images(ia, ib);
    for (std::size_t p = 0; p < d.values.size(); ++p) {
      const int pix = static_cast<int>(p);
      CHECK((ia.empty_at(pix) || ib.empty_at(pix)) == DiffImage::undefined(d.values[p]));
    }
  }
}

TEST_CASE("seen-through submap point is dynamic") {
  const FieldOfView fov;
  const Resolution res{0.02};
  const RangeImage scan = build_range_image({Vec3(20, 0, 0)}, Pose::identity(), res, fov);
  const RangeImage sub = build_range_image({Vec3(10, 0, 0)}, Pose::identity(), res, fov);
  const DiffImage d = diff_range_images(scan, sub);
  const DynamicClassification c = classify_dynamic(d, scan, sub, kDefaults);
  CHECK(c.submap_dynamic_ids == std::vector<int>{0});
  CHECK(c.scan_dynamic_ids.empty());
}

TEST_CASE("scan point in front of the submap is dynamic") {
  const FieldOfView fov;
  const Resolution res{0.02};
  const RangeImage scan = build_range_image({Vec3(5, 0, 0)}, Pose::identity(), res, fov);
  const RangeImage sub = build_range_image({Vec3(20, 0, 0)}, Pose::identity(), res, fov);
  const DynamicClassification c = classify_dynamic(diff_range_images(scan, sub), scan, sub, kDefaults);
  CHECK(c.scan_dynamic_ids == std::vector<int>{0});
  CHECK(c.submap_dynamic_ids.empty());
}

TEST_CASE("differences within tau are kept") {
  const FieldOfView fov;
  const Resolution res{0.02};
  // tau = 0.02 * 10 = 0.2
  const RangeImage scan = build_range_image({Vec3(10.19, 0, 0)}, Pose::identity(), res, fov);
  const RangeImage sub = build_range_image({Vec3(10, 0, 0)}, Pose::identity(), res, fov);
  const DynamicClassification c = classify_dynamic(diff_range_images(scan, sub), scan, sub, kDefaults);
  CHECK(c.submap_dynamic_ids.empty());
  CHECK(c.scan_dynamic_ids.empty());
}

TEST_CASE("only points in front of the seen range are flagged") {
  const FieldOfView fov;
  const Resolution res{0.04};
  const double el = 0.001;
  const RangeImage scan = build_range_image({spherical(20, 0, el)}, Pose::identity(), res, fov);
  // A near point and a point close to the scan range share the pixel.
  const RangeImage sub = build_range_image({spherical(10, 0, el), spherical(19.9, 0, el)},
                                           Pose::identity(), res, fov);
  const DynamicClassification c = classify_dynamic(diff_range_images(scan, sub), scan, sub, kDefaults);
  CHECK(c.submap_dynamic_ids == std::vector<int>{0});
}

TEST_CASE("beam margin limits submap flags to the scanned elevations") {
  const FieldOfView fov;
  const Resolution res{0.04};
  const RangeImage scan = build_range_image({spherical(20, 0, -0.015)}, Pose::identity(), res, fov);
  const RangeImage sub = build_range_image({spherical(10, 0, -0.014), spherical(10, 0, 0.015)},
                                           Pose::identity(), res, fov);
  REQUIRE(sub.pixel_of_point()[0] == sub.pixel_of_point()[1]);
  const DynamicClassification c = classify_dynamic(diff_range_images(scan, sub), scan, sub, kDefaults);
  CHECK(c.submap_dynamic_ids == std::vector<int>{0});
  RemovalParams off = kDefaults;
  off.beam_margin = -1.0;
  const DynamicClassification all = classify_dynamic(diff_range_images(scan, sub), scan, sub, off);
  CHECK(all.submap_dynamic_ids == std::vector<int>{0, 1});
}

TEST_CASE("classification equals the brute-force oracle on random clouds") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> ur(2.0, 40.0), ua(-3.14, 3.14), ue(-0.25, 0.25), uz(-2.0, 3.0);
  const FieldOfView fov;
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud scan, sub;
    for (int i = 0; i < 2000; ++i) {
      const double az = ua(rng), el = ue(rng);
      scan.push_back(spherical(ur(rng), az, el));
      sub.push_back(spherical(ur(rng), az + 0.01 * ue(rng), el + 0.01 * ue(rng)));
    }
    const Pose origin(so3_exp(Vec3(0, 0, 0.3 * trial)), Vec3(trial, 0, 1.8));
    for (Vec3& p : scan) p = origin * p;
    for (Vec3& p : sub) p = origin * p;
    const double res = 0.02 + 0.01 * trial;
    const GroundFilter ground{0.0, 0.5};
    const RangeImage is = build_range_image(scan, origin, {res}, fov, ground);
    const RangeImage im = build_range_image(sub, origin, {res}, fov, ground);
    const DynamicClassification c = classify_dynamic(diff_range_images(is, im), is, im, kDefaults);
    const auto [osub, oscan] =
        vislio::testing::brute_force_classify(scan, sub, origin, res, fov, kDefaults, 0.5);
    CHECK(c.submap_dynamic_ids == osub);
    CHECK(c.scan_dynamic_ids == oscan);
    CHECK(!osub.empty());
  }
}

TEST_CASE("removal helpers") {
  const PointCloud cloud{Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  CHECK(remove_points(cloud, {}) == cloud);
  const std::vector<int> all{0, 1, 2};
  CHECK(remove_points(cloud, all).empty());
  const std::vector<int> mid{1};
  CHECK(remove_points(cloud, mid) == PointCloud{Vec3(1, 0, 0), Vec3(3, 0, 0)});
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(remove_points(cloud, bad), Error);

  std::mt19937_64 rng(25);
  PointCloud big(1000, Vec3::Zero());
  for (int i = 0; i < 1000; ++i) big[i] = Vec3(i, 0, 0);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> ids;
    for (int i = 0; i < 1000; ++i)
      if (rng() % 3 == 0) ids.push_back(i);
    const PointCloud out = remove_points(big, ids);
    CHECK(out.size() == big.size() - ids.size());
    CHECK(std::is_sorted(out.begin(), out.end(), [](const Vec3& a, const Vec3& b) { return a.x() < b.x(); }));
  }
}

TEST_CASE("PGM and CSV writers") {
  const RangeImage img = build_range_image({Vec3(10, 0, 0)}, Pose::identity(), {0.1}, FieldOfView{});
  std::ostringstream os;
  write_range_pgm(img, os);
  const std::string s = os.str();
  const std::string header = "P5\n" + std::to_string(img.width()) + ' ' + std::to_string(img.height()) + "\n65535\n";
  CHECK(s.substr(0, header.size()) == header);
  CHECK(s.size() == header.size() + 2u * img.width() * img.height());
  std::ostringstream cs;
  write_diff_csv(diff_range_images(img, img), cs);
  CHECK(cs.str().find("nan") != std::string::npos);
  CHECK(cs.str().find(",0,") != std::string::npos);
}
