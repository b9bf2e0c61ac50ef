#include "vislio/range_image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>

#include "vislio/errors.hpp"

namespace vislio {

Resolution predict_resolution(double dp_norm, double dtheta_norm, const RemovalParams& params) {
  return {params.alpha * dp_norm + dtheta_norm};
}

Resolution finalize_resolution(Resolution r, const RemovalParams& params) {
  return {std::max(params.beta * r.rad_per_pixel, params.r0)};
}

double resolution_floor_from_sensor(double vertical_fov, int vertical_rays) {
  if (vertical_rays <= 0) {
    throw Error(ErrorCode::InvalidArgument, "vertical ray count must be positive");
  }
  return vertical_fov / vertical_rays;
}

std::span<const int> RangeImage::ids_at(int pixel) const {
  const int b = offsets_[pixel];
  const int e = offsets_[pixel + 1];
  return {ids_.data() + b, static_cast<std::size_t>(e - b)};
}

std::pair<int, int> range_image_size(const FieldOfView& fov, Resolution res) {
  // The small slack keeps exact multiples (2*pi / (2*pi/n)) from rounding up.
  const int w = static_cast<int>(std::ceil(fov.azimuth_span / res.rad_per_pixel - 1e-9));
  const int h = static_cast<int>(std::ceil(fov.elevation_span / res.rad_per_pixel - 1e-9));
  return {std::max(w, 1), std::max(h, 1)};
}

RangeImage build_range_image(const PointCloud& world_points, const Pose& origin, Resolution res,
                             const FieldOfView& fov, const std::optional<GroundFilter>& ground) {
  if (!(res.rad_per_pixel > 0.0) || !(fov.azimuth_span > 0.0) || !(fov.elevation_span > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "resolution and field of view must be positive");
  }
  RangeImage img;
  const auto [w, h] = range_image_size(fov, res);
  img.width_ = w;
  img.height_ = h;
  img.resolution_ = res.rad_per_pixel;
  img.fov_ = fov;
  img.origin_ = origin;

  const std::size_t n_pix = static_cast<std::size_t>(w) * h;
  img.ranges_.assign(n_pix, RangeImage::kEmpty);
  img.pixel_of_point_.assign(world_points.size(), -1);
  img.point_range_.assign(world_points.size(), std::numeric_limits<double>::quiet_NaN());
  img.point_elevation_.assign(world_points.size(), std::numeric_limits<double>::quiet_NaN());
  img.classifiable_.assign(world_points.size(), 0);

  const bool full_circle = fov.azimuth_span >= 2.0 * std::numbers::pi - 1e-12;
  const Pose to_sensor = origin.inverse();
  const Mat3& r = to_sensor.rotation.matrix();
  const double inv_res = 1.0 / res.rad_per_pixel;
  const double z_floor = ground ? ground->ground_z + ground->exclusion_height
                                : -std::numeric_limits<double>::infinity();

  std::vector<int> counts(n_pix + 1, 0);
  for (std::size_t i = 0; i < world_points.size(); ++i) {
    const Vec3& pw = world_points[i];
    const Vec3 q = r * pw + to_sensor.translation;
    const double range = q.norm();
    if (range < 1e-6) {
      continue;
    }
    const double az = std::atan2(q.y(), q.x());
    const double el = std::asin(std::clamp(q.z() / range, -1.0, 1.0));
    int col = static_cast<int>(std::floor((az - fov.azimuth_min) * inv_res));
    const int row = static_cast<int>(std::floor((el - fov.elevation_min) * inv_res));
    if (full_circle) {
      col = ((col % w) + w) % w;
    }
    if (col < 0 || col >= w || row < 0 || row >= h) {
      continue;
    }
    const int pix = row * w + col;
    img.pixel_of_point_[i] = pix;
    img.point_range_[i] = range;
    img.point_elevation_[i] = el;
    img.classifiable_[i] = pw.z() >= z_floor;
    img.ranges_[pix] = std::min(img.ranges_[pix], range);
    ++counts[pix + 1];
  }

  for (std::size_t p = 0; p < n_pix; ++p) {
    counts[p + 1] += counts[p];
  }
  img.offsets_ = counts;
  img.ids_.resize(static_cast<std::size_t>(counts[n_pix]));
  if (img.ids_.empty()) {
    throw Error(ErrorCode::EmptyCloud, "no point inside the range-image field of view");
  }
  std::vector<int> cursor(counts.begin(), counts.end() - 1);
  for (std::size_t i = 0; i < world_points.size(); ++i) {
    const int pix = img.pixel_of_point_[i];
    if (pix >= 0) {
      img.ids_[static_cast<std::size_t>(cursor[pix]++)] = static_cast<int>(i);
    }
  }
  return img;
}

DiffImage diff_range_images(const RangeImage& scan_img, const RangeImage& submap_img) {
  const PoseDistance od = pose_distance(scan_img.origin(), submap_img.origin());
  if (scan_img.width() != submap_img.width() || scan_img.height() != submap_img.height() ||
      scan_img.resolution() != submap_img.resolution() || !(scan_img.fov() == submap_img.fov()) ||
      od.translation > 1e-12 || od.rotation > 1e-12) {
    throw Error(ErrorCode::DimensionMismatch, "range images differ in geometry or origin");
  }
  DiffImage d;
  d.width = scan_img.width();
  d.height = scan_img.height();
  d.values.assign(static_cast<std::size_t>(d.width) * d.height,
                  std::numeric_limits<double>::quiet_NaN());
  for (std::size_t p = 0; p < d.values.size(); ++p) {
    const int pix = static_cast<int>(p);
    if (!scan_img.empty_at(pix) && !submap_img.empty_at(pix)) {
      d.values[p] = scan_img.range_at(pix) - submap_img.range_at(pix);
    }
  }
  return d;
}

double effective_gamma(const RemovalParams& params, double resolution) {
  return params.gamma_tracks_resolution ? std::max(params.gamma, resolution) : params.gamma;
}

DynamicClassification classify_dynamic(const DiffImage& diff, const RangeImage& scan_img,
                                       const RangeImage& submap_img, const RemovalParams& params) {
  if (diff.width != scan_img.width() || diff.height != scan_img.height() ||
      diff.width != submap_img.width() || diff.height != submap_img.height()) {
    throw Error(ErrorCode::DimensionMismatch, "diff image does not match the range images");
  }
  const double gamma = effective_gamma(params, scan_img.resolution());
  DynamicClassification out;
  for (std::size_t p = 0; p < diff.values.size(); ++p) {
    const double d = diff.values[p];
    if (DiffImage::undefined(d)) {
      continue;
    }
    const int pix = static_cast<int>(p);
    const double tau = gamma * std::min(scan_img.range_at(pix), submap_img.range_at(pix));
    // A point in front of the other image's range by more than its tau.
    auto collect = [gamma](const RangeImage& img, int px, double other, double el_lo, double el_hi,
                           std::vector<int>& into) {
      for (const int id : img.ids_at(px)) {
        const double r = img.point_range(id);
        const double el = img.point_elevation(id);
        if (!img.classifiable(id) || el < el_lo || el > el_hi) continue;
        if (other - r > gamma * std::min(r, other)) into.push_back(id);
      }
    };
    constexpr double kInf = std::numeric_limits<double>::infinity();
    if (d > tau) {
      double lo = -kInf;
      double hi = kInf;
      if (params.beam_margin >= 0.0) {
        lo = kInf;
        hi = -kInf;
        for (const int id : scan_img.ids_at(pix)) {
          lo = std::min(lo, scan_img.point_elevation(id));
          hi = std::max(hi, scan_img.point_elevation(id));
        }
        lo -= params.beam_margin;
        hi += params.beam_margin;
      }
      collect(submap_img, pix, scan_img.range_at(pix), lo, hi, out.submap_dynamic_ids);
    } else if (d < -tau) {
      collect(scan_img, pix, submap_img.range_at(pix), -kInf, kInf, out.scan_dynamic_ids);
    }
  }
  std::sort(out.submap_dynamic_ids.begin(), out.submap_dynamic_ids.end());
  std::sort(out.scan_dynamic_ids.begin(), out.scan_dynamic_ids.end());
  return out;
}

std::vector<bool> survivor_mask(std::size_t n, std::span<const int> dynamic_ids) {
  std::vector<bool> keep(n, true);
  for (const int id : dynamic_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw Error(ErrorCode::IdOutOfRange, "point id " + std::to_string(id) + " out of range");
    }
    keep[static_cast<std::size_t>(id)] = false;
  }
  return keep;
}

PointCloud remove_points(const PointCloud& cloud, std::span<const int> dynamic_ids) {
  const std::vector<bool> keep = survivor_mask(cloud.size(), dynamic_ids);
  PointCloud out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep[i]) {
      out.push_back(cloud[i]);
    }
  }
  return out;
}

void write_range_pgm(const RangeImage& img, std::ostream& os) {
  os << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  // Rows are written top-down, so the highest elevation comes first.
  for (int row = img.height() - 1; row >= 0; --row) {
    for (int col = 0; col < img.width(); ++col) {
      const double r = img.range(row, col);
      std::uint16_t v = 0;
      if (r != RangeImage::kEmpty) {
        v = static_cast<std::uint16_t>(std::clamp(std::lround(r * 1000.0), 1L, 65535L));
      }
      const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
      os.write(bytes, 2);
    }
  }
}

void write_diff_csv(const DiffImage& diff, std::ostream& os) {
  for (int row = diff.height - 1; row >= 0; --row) {
    for (int col = 0; col < diff.width; ++col) {
      const double v = diff.values[static_cast<std::size_t>(row) * diff.width + col];
      if (col > 0) os << ',';
      if (DiffImage::undefined(v)) {
        os << "nan";
      } else {
        os << v;
      }
    }
    os << '\n';
  }
}

}  // namespace vislio
