#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vislio/dataset.hpp"
#include "vislio/evaluation.hpp"
#include "vislio/pipeline.hpp"

namespace vislio {

/// Pipeline defaults adapted to a dataset's sensor constants.
PipelineConfig default_config(const SensorMeta& meta);

/// key=value overrides (alpha, beta, r0, gamma, score0, tau_d, mode, ...).
/// Throws FormatError for unknown keys or bad values.
void apply_config(PipelineConfig& config, std::istream& is, const std::string& source);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& file);
void write_config(const PipelineConfig& config, std::ostream& os);

struct RunSummary {
  int scans = 0;
  int keyframes = 0;
  int low_confidence = 0;
  int max_rounds_used = 0;
  StageTimings mean_ms;
  double max_total_ms = 0.0;
  std::optional<double> ate_rmse;
  std::optional<RemovalStats> removal;
};

/// Aggregates that depend only on the per-sweep records.
RunSummary summarize(const std::vector<ScanRecord>& records);

struct RunReport {
  RemovalMode mode = RemovalMode::Off;
  std::vector<ScanRecord> records;
  Trajectory trajectory;
  LabeledMap map;
  RunSummary summary;
};

/// Runs every sweep through a fresh pipeline; fills ATE when the dataset has
/// ground truth and removal statistics when it has labels.
RunReport run_dataset(const Dataset& data, const PipelineConfig& config);

void write_records_csv(const std::vector<ScanRecord>& records, std::ostream& os);
/// Reads the columns written by write_records_csv. Throws FormatError.
std::vector<ScanRecord> read_records_csv(std::istream& is, const std::string& source);
void write_summary(const RunReport& report, std::ostream& os);

/// trajectory.txt, records.csv, summary.txt and map.ply under dir.
void write_run(const RunReport& report, const std::filesystem::path& dir);

}  // namespace vislio
