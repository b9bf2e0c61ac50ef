// Command-line front end: simulate datasets, run the odometry, evaluate.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "vislio/dataset.hpp"
#include "vislio/errors.hpp"
#include "vislio/evaluation.hpp"
#include "vislio/run.hpp"
#include "vislio/simworld.hpp"

namespace fs = std::filesystem;
using namespace vislio;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitRuntime = 3;

int cmd_run(const fs::path& data_dir, const fs::path& out_dir, const std::string& mode,
            const std::string& config_file) {
  const Dataset data = read_dataset(data_dir);
  PipelineConfig cfg = default_config(data.meta);
  if (!config_file.empty()) apply_config_file(cfg, config_file);
  if (!mode.empty()) cfg.mode = parse_removal_mode(mode);
  const RunReport report = run_dataset(data, cfg);
  write_run(report, out_dir);
  {
    std::ofstream os(out_dir / "config.txt");
    write_config(cfg, os);
  }
  write_summary(report, std::cout);
  return 0;
}

int cmd_simulate(const fs::path& out_dir, const std::string& preset, std::uint64_t seed,
                 double duration) {
  SceneSpec scene = street_scene(preset == "dynamic", seed);
  if (duration > 0.0) scene.duration = duration;
  generate_dataset(scene, out_dir);
  std::cout << "wrote " << static_cast<int>(std::floor(scene.duration / scene.lidar.sweep_period + 1e-9))
            << " sweeps to " << out_dir.string() << '\n';
  return 0;
}

int cmd_eval_ate(const fs::path& est, const fs::path& gt, double max_dt) {
  const AteResult r = ate(read_trajectory(est), read_trajectory(gt), max_dt);
  std::printf("%.3f\n", r.rmse);
  return 0;
}

int cmd_removal_stats(const fs::path& map_file, const fs::path& baseline_file) {
  const LabeledMap map = read_map_ply(map_file);
  const RemovalStats s = removal_stats(map);
  std::printf("dynamic_points %ld\ndynamic_residual %ld\nrate_vs_truth_pct %.3f\n", s.dynamic_total,
              s.dynamic_residual, s.rate_vs_truth);
  std::printf("static_points %ld\nstatic_removed %ld\nstatic_removed_pct %.3f\n", s.static_total,
              s.static_removed, s.static_removed_pct);
  if (!baseline_file.empty()) {
    std::printf("rate_vs_baseline_pct %.3f\n", rate_vs_baseline(read_map_ply(baseline_file), map));
  }
  return 0;
}

int cmd_dump(const fs::path& data_dir, const fs::path& out_dir, int scan_index,
             const std::string& config_file) {
  const Dataset data = read_dataset(data_dir);
  if (scan_index < 1 || scan_index >= static_cast<int>(data.scans.size())) {
    throw Error(ErrorCode::InvalidArgument, "scan index must lie in [1, " +
                                                std::to_string(data.scans.size() - 1) + "]");
  }
  PipelineConfig cfg = default_config(data.meta);
  if (!config_file.empty()) apply_config_file(cfg, config_file);
  Pipeline pipeline(cfg);
  for (int k = 0; k < scan_index; ++k) pipeline.process_scan(data.scans[static_cast<std::size_t>(k)], data.imu);
  const RemovalPreview pv = pipeline.preview_removal(data.scans[static_cast<std::size_t>(scan_index)], data.imu);
  fs::create_directories(out_dir);
  auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
    std::ofstream os(out_dir / name, mode);
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + (out_dir / name).string());
    return os;
  };
  {
    auto os = open("scan.pgm", std::ios::out | std::ios::binary);
    write_range_pgm(pv.scan_image, os);
  }
  {
    auto os = open("submap.pgm", std::ios::out | std::ios::binary);
    write_range_pgm(pv.map_image, os);
  }
  {
    auto os = open("diff.csv");
    write_diff_csv(pv.diff, os);
  }
  std::printf("resolution_rad %.6f\nimage %dx%d\nscan_dynamic %zu\nsubmap_dynamic %zu\n",
              pv.resolution.rad_per_pixel, pv.scan_image.width(), pv.scan_image.height(),
              pv.classes.scan_dynamic_ids.size(), pv.classes.submap_dynamic_ids.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lidar-inertial odometry with removal of moving points"};
  app.require_subcommand(1);

  std::string data_dir, out_dir, mode, config_file, preset = "dynamic", est, gt, map_file, baseline;
  std::uint64_t seed = 7;
  double duration = 0.0;
  double max_dt = 0.05;
  int scan_index = 1;

  auto* run = app.add_subcommand("run", "Run the odometry on a dataset");
  run->add_option("--data", data_dir, "Dataset directory")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--mode", mode, "Removal mode: off, after, first, fa");
  run->add_option("--config", config_file, "key=value configuration file");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic street dataset");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--preset", preset, "dynamic or static")->check(CLI::IsMember({"dynamic", "static"}));
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--duration", duration, "Seconds of data (default 20)");

  auto* ev = app.add_subcommand("eval-ate", "Absolute trajectory RMSE after rigid alignment");
  ev->add_option("--est", est, "Estimated trajectory")->required();
  ev->add_option("--gt", gt, "Ground-truth trajectory")->required();
  ev->add_option("--max-dt", max_dt, "Association window in seconds");

  auto* rs = app.add_subcommand("removal-stats", "Removal rates of a labeled map");
  rs->add_option("--map", map_file, "Cleaned map (PLY from run)")->required();
  rs->add_option("--baseline", baseline, "Map of the same data without removal");

  auto* dump = app.add_subcommand("dump-range-images", "Write the range images of one sweep");
  dump->add_option("--data", data_dir, "Dataset directory")->required();
  dump->add_option("--out", out_dir, "Output directory")->required();
  dump->add_option("--scan", scan_index, "Sweep index (>= 1)");
  dump->add_option("--config", config_file, "key=value configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(data_dir, out_dir, mode, config_file);
    if (*sim) return cmd_simulate(out_dir, preset, seed, duration);
    if (*ev) return cmd_eval_ate(est, gt, max_dt);
    if (*rs) return cmd_removal_stats(map_file, baseline);
    if (*dump) return cmd_dump(data_dir, out_dir, scan_index, config_file);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const ErrorCode c = e.code();
    if (c == ErrorCode::FormatError || c == ErrorCode::ClockSkew) return kExitFormat;
    if (c == ErrorCode::InvalidArgument) return kExitUsage;
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
