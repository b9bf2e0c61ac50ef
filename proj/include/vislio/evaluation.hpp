#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vislio/dataset.hpp"
#include "vislio/pipeline.hpp"

namespace vislio {

struct AteResult {
  double rmse = 0.0;      // m
  int matched = 0;        // associated pose pairs
  Pose alignment;         // maps est positions onto gt
};

/// Associates every est pose with the gt pose nearest in time (within
/// max_dt), rigidly aligns est onto gt (rotation + translation, no scale) and
/// returns the RMS of the translation residuals. Throws NoOverlap when fewer
/// than two pairs associate.
AteResult ate(const Trajectory& est, const Trajectory& gt, double max_dt = 0.05);
inline double ate_rmse(const Trajectory& est, const Trajectory& gt, double max_dt = 0.05) {
  return ate(est, gt, max_dt).rmse;
}

/// 100 * (1 - residual / baseline). Throws ZeroBaseline when baseline is 0.
double removal_rate(long baseline_dynamic, long residual_dynamic);

/// Map points with ground-truth labels and the removal verdict.
struct LabeledMap {
  PointCloud points;
  std::vector<char> dynamic;
  std::vector<char> alive;

  long count(bool dynamic_label, bool alive_state) const;
};

/// Labels every map point from its (scan, point) provenance. Throws
/// InvalidArgument when a provenance entry has no label.
LabeledMap label_map(const PointMap& map, const std::vector<std::vector<char>>& labels);

struct RemovalStats {
  long dynamic_total = 0;     // labeled dynamic points inserted into the map
  long dynamic_residual = 0;  // of those, still alive
  long static_total = 0;
  long static_removed = 0;
  double rate_vs_truth = 0.0;       // percent of dynamic points removed
  double static_removed_pct = 0.0;  // percent of static points removed
};

/// Removal statistics of one map against its own labels.
RemovalStats removal_stats(const LabeledMap& map);

/// Residual dynamic points of `cleaned` relative to those of `baseline`, the
/// same data mapped without removal.
double rate_vs_baseline(const LabeledMap& baseline, const LabeledMap& cleaned);

/// ASCII PLY with x y z label alive.
void write_map_ply(const LabeledMap& map, std::ostream& os);
void write_map_ply(const LabeledMap& map, const std::filesystem::path& file);
/// Reads files written by write_map_ply. Throws FormatError.
LabeledMap read_map_ply(const std::filesystem::path& file);

/// Pipeline poses at every sweep end.
Trajectory trajectory_of(const std::vector<ScanRecord>& records);

}  // namespace vislio
