#pragma once

#include <iosfwd>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "vislio/geometry.hpp"
#include "vislio/point_cloud.hpp"

namespace vislio {

/// Parameters of visibility-based removal. Defaults are the published values.
struct RemovalParams {
  double alpha = 0.1;  // rad/m, weight of translation error
  double beta = 2.0;   // enlargement of the predicted resolution
  double r0 = 0.02;    // rad, resolution floor
  double gamma = 0.02; // range sensitivity of the threshold
  double ground_exclusion_height = 0.5;  // m
  // When set, the threshold uses max(gamma, image resolution).
  bool gamma_tracks_resolution = true;
  // Submap points count as seen through only within this elevation distance
  // of the scan returns of their pixel; negative disables the check.
  double beam_margin = 0.002;  // rad
};

/// Angular size of one (square) range-image pixel.
struct Resolution {
  double rad_per_pixel = 0.0;
};

/// r = alpha * dp + dtheta.
Resolution predict_resolution(double dp_norm, double dtheta_norm, const RemovalParams& params);

/// r_f = max(beta * r, r0).
Resolution finalize_resolution(Resolution r, const RemovalParams& params);

/// Resolution floor from the sensor geometry: vertical FOV over ray count.
double resolution_floor_from_sensor(double vertical_fov, int vertical_rays);

struct FieldOfView {
  double azimuth_min = -std::numbers::pi;
  double azimuth_span = 2.0 * std::numbers::pi;
  double elevation_min = -std::numbers::pi / 12.0;
  double elevation_span = std::numbers::pi / 6.0;

  bool operator==(const FieldOfView&) const = default;
};

/// Points whose world z is below ground_z + exclusion_height still shape the
/// pixel ranges (a ground return is evidence of free space) but are never
/// classified themselves.
struct GroundFilter {
  double ground_z = 0.0;
  double exclusion_height = 0.5;
};

class RangeImage {
 public:
  static constexpr double kEmpty = std::numeric_limits<double>::infinity();

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const FieldOfView& fov() const { return fov_; }
  const Pose& origin() const { return origin_; }

  int pixel_index(int row, int col) const { return row * width_ + col; }
  double range(int row, int col) const { return ranges_[pixel_index(row, col)]; }
  double range_at(int pixel) const { return ranges_[pixel]; }
  bool empty_at(int pixel) const { return ranges_[pixel] == kEmpty; }
  std::span<const int> point_ids(int row, int col) const { return ids_at(pixel_index(row, col)); }
  std::span<const int> ids_at(int pixel) const;

  /// Pixel of each input point, -1 when it was skipped.
  const std::vector<int>& pixel_of_point() const { return pixel_of_point_; }
  /// Range of each input point from the origin (NaN when skipped).
  double point_range(int id) const { return point_range_[static_cast<std::size_t>(id)]; }
  double point_elevation(int id) const { return point_elevation_[static_cast<std::size_t>(id)]; }
  /// False for skipped points and for points inside the ground band.
  bool classifiable(int id) const { return classifiable_[static_cast<std::size_t>(id)] != 0; }
  std::size_t binned_count() const { return ids_.size(); }

 private:
  friend RangeImage build_range_image(const PointCloud&, const Pose&, Resolution,
                                      const FieldOfView&, const std::optional<GroundFilter>&);
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 0.0;
  FieldOfView fov_;
  Pose origin_;
  std::vector<double> ranges_;
  std::vector<int> offsets_;  // CSR offsets into ids_, size width*height+1
  std::vector<int> ids_;
  std::vector<int> pixel_of_point_;
  std::vector<double> point_range_;
  std::vector<double> point_elevation_;
  std::vector<char> classifiable_;
};

/// Image dimensions for a field of view: ceil(span / resolution) per axis.
std::pair<int, int> range_image_size(const FieldOfView& fov, Resolution res);

/// Bins world-frame points into a spherical image centred at `origin`. Each
/// pixel keeps the minimum range and the ids of every point it received.
/// Throws EmptyCloud when no point falls inside the field of view.
RangeImage build_range_image(const PointCloud& world_points, const Pose& origin, Resolution res,
                             const FieldOfView& fov,
                             const std::optional<GroundFilter>& ground = std::nullopt);

struct DiffImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // NaN marks undefined pixels

  static bool undefined(double v) { return v != v; }
};

/// scan - submap per pixel; undefined where either side is empty.
DiffImage diff_range_images(const RangeImage& scan_img, const RangeImage& submap_img);

struct DynamicClassification {
  std::vector<int> submap_dynamic_ids;  // sorted
  std::vector<int> scan_dynamic_ids;    // sorted
};

/// Visibility test per pixel. Where diff > tau the scan saw through the submap
/// there, and every submap point of the pixel that lies nearer than the scan
/// range by more than its own tau = gamma * min(point range, scan range) is
/// flagged; the nearest point of the pixel decides exactly as the pixel
/// difference does. diff < -tau flags scan points the same way.
DynamicClassification classify_dynamic(const DiffImage& diff, const RangeImage& scan_img,
                                       const RangeImage& submap_img, const RemovalParams& params);

/// Effective gamma for an image of the given resolution.
double effective_gamma(const RemovalParams& params, double resolution);

/// Cloud minus the listed points, survivors in their original order.
PointCloud remove_points(const PointCloud& cloud, std::span<const int> dynamic_ids);

/// Boolean keep-mask form of remove_points.
std::vector<bool> survivor_mask(std::size_t n, std::span<const int> dynamic_ids);

/// 16-bit binary PGM, ranges quantized to millimetres, empty pixels as 0.
void write_range_pgm(const RangeImage& img, std::ostream& os);
/// One row per image row; undefined pixels are written as "nan".
void write_diff_csv(const DiffImage& diff, std::ostream& os);

}  // namespace vislio
