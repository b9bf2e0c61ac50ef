#include "vislio/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "vislio/errors.hpp"

namespace vislio {

namespace {

std::string g(double v, const char* pattern = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

double to_double(const std::string& s, const std::string& source, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw Error(ErrorCode::FormatError,
                source + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s, const std::string& source, std::size_t line) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw Error(ErrorCode::FormatError,
              source + ":" + std::to_string(line) + ": expected true/false, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

PipelineConfig default_config(const SensorMeta& meta) {
  PipelineConfig c;
  c.sweep_period = meta.sweep_period;
  c.noise = meta.noise;
  c.sensor_height = meta.sensor_height;
  // A small margin keeps the outermost rings off the image border.
  c.fov.elevation_min = -0.5 * meta.vertical_fov - 0.01;
  c.fov.elevation_span = meta.vertical_fov + 0.02;
  return c;
}

void apply_config(PipelineConfig& c, std::istream& is, const std::string& source) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::FormatError, source + ":" + std::to_string(n) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    auto num = [&]() { return to_double(val, source, n); };
    if (key == "mode") {
      try {
        c.mode = parse_removal_mode(val);
      } catch (const Error&) {
        throw Error(ErrorCode::FormatError, source + ":" + std::to_string(n) + ": bad mode '" + val + "'");
      }
    } else if (key == "alpha") c.removal.alpha = num();
    else if (key == "beta") c.removal.beta = num();
    else if (key == "r0") c.removal.r0 = num();
    else if (key == "gamma") c.removal.gamma = num();
    else if (key == "gamma_tracks_resolution") c.removal.gamma_tracks_resolution = to_bool(val, source, n);
    else if (key == "beam_margin") c.removal.beam_margin = num();
    else if (key == "ground_exclusion_height") c.removal.ground_exclusion_height = num();
    else if (key == "score0") c.score0 = num();
    else if (key == "tau_d") c.tau_d = num();
    else if (key == "max_rounds") c.max_rounds = static_cast<int>(num());
    else if (key == "keyframe_translation") c.gates.translation = num();
    else if (key == "keyframe_rotation") c.gates.rotation = num();
    else if (key == "window") c.window = static_cast<int>(num());
    else if (key == "edge_leaf") c.edge_leaf = num();
    else if (key == "plane_leaf") c.plane_leaf = num();
    else if (key == "edge_threshold") c.features.edge_threshold = num();
    else if (key == "planar_threshold") c.features.planar_threshold = num();
    else if (key == "edge_cap") c.features.edge_cap = static_cast<int>(num());
    else if (key == "planar_cap") c.features.planar_cap = static_cast<int>(num());
    else if (key == "correspondence_gate") c.matching.max_correspondence_distance = num();
    else if (key == "huber_delta") c.matching.huber_delta = num();
    else if (key == "max_iterations") c.matching.max_iterations = static_cast<int>(num());
    else if (key == "velocity_gain") c.velocity_gain = num();
    else if (key == "min_range") c.min_range = num();
    else if (key == "sensor_height") c.sensor_height = num();
    else {
      throw Error(ErrorCode::FormatError, source + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    }
  }
  if (c.max_rounds < 1 || c.window < 1) {
    throw Error(ErrorCode::FormatError, source + ": max_rounds and window must be >= 1");
  }
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw Error(ErrorCode::FormatError, file.string() + ": missing or unreadable");
  apply_config(config, is, file.string());
}

void write_config(const PipelineConfig& c, std::ostream& os) {
  os << "mode=" << to_string(c.mode) << '\n'
     << "alpha=" << g(c.removal.alpha) << '\n'
     << "beta=" << g(c.removal.beta) << '\n'
     << "r0=" << g(c.removal.r0) << '\n'
     << "gamma=" << g(c.removal.gamma) << '\n'
     << "gamma_tracks_resolution=" << (c.removal.gamma_tracks_resolution ? "true" : "false") << '\n'
     << "beam_margin=" << g(c.removal.beam_margin) << '\n'
     << "ground_exclusion_height=" << g(c.removal.ground_exclusion_height) << '\n'
     << "score0=" << g(c.score0) << '\n'
     << "tau_d=" << g(c.tau_d) << '\n'
     << "max_rounds=" << c.max_rounds << '\n'
     << "keyframe_translation=" << g(c.gates.translation) << '\n'
     << "keyframe_rotation=" << g(c.gates.rotation) << '\n'
     << "window=" << c.window << '\n'
     << "edge_leaf=" << g(c.edge_leaf) << '\n'
     << "plane_leaf=" << g(c.plane_leaf) << '\n'
     << "edge_threshold=" << g(c.features.edge_threshold) << '\n'
     << "planar_threshold=" << g(c.features.planar_threshold) << '\n'
     << "edge_cap=" << c.features.edge_cap << '\n'
     << "planar_cap=" << c.features.planar_cap << '\n'
     << "correspondence_gate=" << g(c.matching.max_correspondence_distance) << '\n'
     << "huber_delta=" << g(c.matching.huber_delta) << '\n'
     << "max_iterations=" << c.matching.max_iterations << '\n'
     << "velocity_gain=" << g(c.velocity_gain) << '\n'
     << "min_range=" << g(c.min_range) << '\n'
     << "sensor_height=" << g(c.sensor_height) << '\n';
}

RunSummary summarize(const std::vector<ScanRecord>& records) {
  RunSummary s;
  s.scans = static_cast<int>(records.size());
  for (const ScanRecord& r : records) {
    s.keyframes += r.keyframe ? 1 : 0;
    s.low_confidence += r.status == ScanStatus::LowConfidence ? 1 : 0;
    s.max_rounds_used = std::max(s.max_rounds_used, r.rounds);
    s.mean_ms.predict_ms += r.timings.predict_ms;
    s.mean_ms.deskew_ms += r.timings.deskew_ms;
    s.mean_ms.features_ms += r.timings.features_ms;
    s.mean_ms.removal_ms += r.timings.removal_ms;
    s.mean_ms.matching_ms += r.timings.matching_ms;
    s.mean_ms.finalize_ms += r.timings.finalize_ms;
    s.mean_ms.total_ms += r.timings.total_ms;
    s.max_total_ms = std::max(s.max_total_ms, r.timings.total_ms);
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    s.mean_ms.predict_ms /= n;
    s.mean_ms.deskew_ms /= n;
    s.mean_ms.features_ms /= n;
    s.mean_ms.removal_ms /= n;
    s.mean_ms.matching_ms /= n;
    s.mean_ms.finalize_ms /= n;
    s.mean_ms.total_ms /= n;
  }
  return s;
}

RunReport run_dataset(const Dataset& data, const PipelineConfig& config) {
  Pipeline pipeline(config);
  RunReport report;
  report.mode = config.mode;
  for (const RawScan& scan : data.scans) {
    pipeline.process_scan(scan, data.imu);
  }
  report.records = pipeline.records();
  report.trajectory = trajectory_of(report.records);
  report.map = label_map(pipeline.map(), data.labels);
  report.summary = summarize(report.records);
  if (!data.ground_truth.empty()) {
    report.summary.ate_rmse = ate_rmse(report.trajectory, data.ground_truth);
  }
  if (data.labeled() && report.map.count(true, true) + report.map.count(true, false) > 0) {
    report.summary.removal = removal_stats(report.map);
  }
  return report;
}

namespace {

constexpr const char* kRecordHeader =
    "scan,stamp,tx,ty,tz,qx,qy,qz,qw,status,keyframe,keyframe_id,score,rounds,resolutions,"
    "scan_points,edge_features,planar_features,removed_scan,removed_submap,removed_final,"
    "iterations,predict_ms,deskew_ms,features_ms,removal_ms,matching_ms,finalize_ms,total_ms";

}  // namespace

void write_records_csv(const std::vector<ScanRecord>& records, std::ostream& os) {
  os << kRecordHeader << '\n';
  for (const ScanRecord& r : records) {
    const Eigen::Quaterniond q = r.pose.rotation.quaternion();
    const Vec3& t = r.pose.translation;
    std::string res;
    for (std::size_t i = 0; i < r.resolutions.size(); ++i) {
      if (i) res += ';';
      res += g(r.resolutions[i]);
    }
    os << r.scan_index << ',' << g(r.stamp, "%.17g") << ',' << g(t.x(), "%.17g") << ','
       << g(t.y(), "%.17g") << ',' << g(t.z(), "%.17g") << ',' << g(q.x(), "%.17g") << ','
       << g(q.y(), "%.17g") << ',' << g(q.z(), "%.17g") << ',' << g(q.w(), "%.17g") << ','
       << to_string(r.status) << ',' << (r.keyframe ? 1 : 0) << ',' << r.keyframe_id << ','
       << g(r.score) << ',' << r.rounds << ',' << res << ',' << r.scan_points << ','
       << r.edge_features << ',' << r.planar_features << ',' << r.removed_scan << ','
       << r.removed_submap << ',' << r.removed_final << ',' << r.match_iterations << ','
       << g(r.timings.predict_ms, "%.17g") << ',' << g(r.timings.deskew_ms, "%.17g") << ','
       << g(r.timings.features_ms, "%.17g") << ',' << g(r.timings.removal_ms, "%.17g") << ','
       << g(r.timings.matching_ms, "%.17g") << ',' << g(r.timings.finalize_ms, "%.17g") << ','
       << g(r.timings.total_ms, "%.17g") << '\n';
  }
}

std::vector<ScanRecord> read_records_csv(std::istream& is, const std::string& source) {
  std::vector<ScanRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (n == 1) {
      if (trim(line) != kRecordHeader) {
        throw Error(ErrorCode::FormatError, source + ":1: unexpected header");
      }
      continue;
    }
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 29) {
      throw Error(ErrorCode::FormatError, source + ":" + std::to_string(n) + ": expected 29 columns");
    }
    auto d = [&](int i) { return to_double(f[static_cast<std::size_t>(i)], source, n); };
    ScanRecord r;
    r.scan_index = static_cast<int>(d(0));
    r.stamp = d(1);
    r.pose = Pose(Rotation(Eigen::Quaterniond(d(8), d(5), d(6), d(7))), Vec3(d(2), d(3), d(4)));
    if (f[9] == "bootstrap") r.status = ScanStatus::Bootstrap;
    else if (f[9] == "accepted") r.status = ScanStatus::Accepted;
    else if (f[9] == "low-confidence") r.status = ScanStatus::LowConfidence;
    else throw Error(ErrorCode::FormatError, source + ":" + std::to_string(n) + ": bad status");
    r.keyframe = d(10) != 0.0;
    r.keyframe_id = static_cast<int>(d(11));
    r.score = d(12);
    r.rounds = static_cast<int>(d(13));
    std::stringstream rs(f[14]);
    while (std::getline(rs, cell, ';')) {
      if (!cell.empty()) r.resolutions.push_back(to_double(cell, source, n));
    }
    r.scan_points = static_cast<int>(d(15));
    r.edge_features = static_cast<int>(d(16));
    r.planar_features = static_cast<int>(d(17));
    r.removed_scan = static_cast<int>(d(18));
    r.removed_submap = static_cast<int>(d(19));
    r.removed_final = static_cast<int>(d(20));
    r.match_iterations = static_cast<int>(d(21));
    r.timings = {d(22), d(23), d(24), d(25), d(26), d(27), d(28)};
    out.push_back(r);
  }
  return out;
}

void write_summary(const RunReport& report, std::ostream& os) {
  const RunSummary& s = report.summary;
  os << "mode " << to_string(report.mode) << '\n'
     << "scans " << s.scans << '\n'
     << "keyframes " << s.keyframes << '\n'
     << "low_confidence " << s.low_confidence << '\n'
     << "max_rounds_used " << s.max_rounds_used << '\n';
  if (s.ate_rmse) os << "ate_rmse_m " << g(*s.ate_rmse, "%.6f") << '\n';
  if (s.removal) {
    os << "dynamic_points " << s.removal->dynamic_total << '\n'
       << "dynamic_residual " << s.removal->dynamic_residual << '\n'
       << "rate_vs_truth_pct " << g(s.removal->rate_vs_truth, "%.3f") << '\n'
       << "static_points " << s.removal->static_total << '\n'
       << "static_removed " << s.removal->static_removed << '\n'
       << "static_removed_pct " << g(s.removal->static_removed_pct, "%.3f") << '\n';
  }
  os << "mean_ms predict " << g(s.mean_ms.predict_ms, "%.3f") << '\n'
     << "mean_ms deskew " << g(s.mean_ms.deskew_ms, "%.3f") << '\n'
     << "mean_ms features " << g(s.mean_ms.features_ms, "%.3f") << '\n'
     << "mean_ms removal " << g(s.mean_ms.removal_ms, "%.3f") << '\n'
     << "mean_ms matching " << g(s.mean_ms.matching_ms, "%.3f") << '\n'
     << "mean_ms finalize " << g(s.mean_ms.finalize_ms, "%.3f") << '\n'
     << "mean_ms total " << g(s.mean_ms.total_ms, "%.3f") << '\n'
     << "max_ms total " << g(s.max_total_ms, "%.3f") << '\n';
}

void write_run(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  write_trajectory(report.trajectory, dir / "trajectory.txt");
  auto out = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / name).string());
    return os;
  };
  {
    std::ofstream os = out("records.csv");
    write_records_csv(report.records, os);
  }
  {
    std::ofstream os = out("summary.txt");
    write_summary(report, os);
  }
  write_map_ply(report.map, dir / "map.ply");
}

}  // namespace vislio
