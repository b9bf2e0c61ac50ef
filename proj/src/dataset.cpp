#include "vislio/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vislio/errors.hpp"

namespace fs = std::filesystem;

namespace vislio {

namespace {

[[noreturn]] void format_error(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::FormatError, source + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& text, const std::string& source, std::size_t line) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE) {
    format_error(source, line, "not a number: '" + text + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (const char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string g9(double v) { return fmt("%.9g", v); }
std::string g17(double v) { return fmt("%.17g", v); }

std::ofstream open_out(const fs::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
  return os;
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error(ErrorCode::FormatError, file.string() + ": missing or unreadable");
  return is;
}

RawScan read_scan(const fs::path& file, std::vector<char>& labels, bool& has_labels) {
  std::ifstream is = open_in(file);
  const std::string src = file.string();
  std::string line;
  std::size_t n = 0;
  RawScan scan;
  bool stamped = false;
  has_labels = false;
  int columns = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank(line)) continue;
    if (line[0] == '#') {
      const auto f = split(line.substr(1), ' ');
      if (f.size() == 2 && f[0] == "stamp") {
        scan.stamp = parse_double(f[1], src, n);
        stamped = true;
      }
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5 && f.size() != 6) format_error(src, n, "expected x,y,z,t_rel,ring[,label]");
    if (columns == 0) {
      columns = static_cast<int>(f.size());
      has_labels = columns == 6;
    } else if (columns != static_cast<int>(f.size())) {
      format_error(src, n, "inconsistent column count");
    }
    RawPoint p;
    p.xyz = Vec3(parse_double(f[0], src, n), parse_double(f[1], src, n), parse_double(f[2], src, n));
    p.t_rel = parse_double(f[3], src, n);
    const double ring = parse_double(f[4], src, n);
    if (ring < 0 || ring != std::floor(ring)) format_error(src, n, "ring must be a non-negative integer");
    p.ring = static_cast<int>(ring);
    scan.points.push_back(p);
    if (has_labels) {
      const double lab = parse_double(f[5], src, n);
      if (lab != 0.0 && lab != 1.0) format_error(src, n, "label must be 0 or 1");
      labels.push_back(lab != 0.0 ? 1 : 0);
    }
  }
  if (!stamped) format_error(src, 1, "missing '# stamp' header");
  return scan;
}

}  // namespace

void write_meta(const SensorMeta& m, std::ostream& os) {
  os << "name=" << m.name << '\n'
     << "channels=" << m.channels << '\n'
     << "vertical_fov=" << g17(m.vertical_fov) << '\n'
     << "horizontal_resolution=" << g17(m.horizontal_resolution) << '\n'
     << "sweep_period=" << g17(m.sweep_period) << '\n'
     << "max_range=" << g17(m.max_range) << '\n'
     << "imu_rate=" << g17(m.imu_rate) << '\n'
     << "sensor_height=" << g17(m.sensor_height) << '\n'
     << "gyro_noise=" << g17(m.noise.gyro_noise) << '\n'
     << "accel_noise=" << g17(m.noise.accel_noise) << '\n'
     << "gyro_walk=" << g17(m.noise.gyro_walk) << '\n'
     << "accel_walk=" << g17(m.noise.accel_walk) << '\n'
     << "gravity=" << g17(-m.noise.gravity.z()) << '\n';
}

SensorMeta read_meta(std::istream& is, const std::string& source) {
  SensorMeta m;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank(line) || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) format_error(source, n, "expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "name") {
      m.name = val;
      continue;
    }
    const double v = parse_double(val, source, n);
    if (key == "channels") m.channels = static_cast<int>(v);
    else if (key == "vertical_fov") m.vertical_fov = v;
    else if (key == "horizontal_resolution") m.horizontal_resolution = v;
    else if (key == "sweep_period") m.sweep_period = v;
    else if (key == "max_range") m.max_range = v;
    else if (key == "imu_rate") m.imu_rate = v;
    else if (key == "sensor_height") m.sensor_height = v;
    else if (key == "gyro_noise") m.noise.gyro_noise = v;
    else if (key == "accel_noise") m.noise.accel_noise = v;
    else if (key == "gyro_walk") m.noise.gyro_walk = v;
    else if (key == "accel_walk") m.noise.accel_walk = v;
    else if (key == "gravity") m.noise.gravity = Vec3(0.0, 0.0, -v);
    else format_error(source, n, "unknown key '" + key + "'");
  }
  if (!(m.sweep_period > 0.0) || m.channels <= 0) {
    format_error(source, n, "sweep_period and channels must be positive");
  }
  return m;
}

void write_trajectory(const Trajectory& traj, std::ostream& os) {
  for (const TimedPose& tp : traj) {
    const Eigen::Quaterniond q = tp.pose.rotation.quaternion();
    const Vec3& t = tp.pose.translation;
    os << g17(tp.t) << ' ' << g17(t.x()) << ' ' << g17(t.y()) << ' ' << g17(t.z()) << ' '
       << g17(q.x()) << ' ' << g17(q.y()) << ' ' << g17(q.z()) << ' ' << g17(q.w()) << '\n';
  }
}

void write_trajectory(const Trajectory& traj, const fs::path& file) {
  std::ofstream os = open_out(file);
  write_trajectory(traj, os);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
}

Trajectory read_trajectory(std::istream& is, const std::string& source) {
  Trajectory out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank(line) || line[0] == '#') continue;
    const auto f = split(line, ' ');
    if (f.size() != 8) format_error(source, n, "expected t tx ty tz qx qy qz qw");
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(f[static_cast<std::size_t>(i)], source, n);
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-6) format_error(source, n, "zero quaternion");
    if (!out.empty() && !(v[0] > out.back().t)) format_error(source, n, "stamps must increase");
    out.push_back({v[0], Pose(Rotation(q), Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

Trajectory read_trajectory(const fs::path& file) {
  std::ifstream is = open_in(file);
  return read_trajectory(is, file.string());
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "scans", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + (dir / "scans").string());
  // Stale sweeps from an earlier, longer run would otherwise be read back.
  for (const auto& entry : fs::directory_iterator(dir / "scans")) {
    if (entry.path().extension() == ".csv") fs::remove(entry.path(), ec);
  }
  {
    std::ofstream os = open_out(dir / "meta.txt");
    write_meta(data.meta, os);
  }
  {
    std::ofstream os = open_out(dir / "imu.csv");
    for (const ImuSample& s : data.imu) {
      os << g9(s.t) << ',' << g9(s.gyro.x()) << ',' << g9(s.gyro.y()) << ',' << g9(s.gyro.z()) << ','
         << g9(s.accel.x()) << ',' << g9(s.accel.y()) << ',' << g9(s.accel.z()) << '\n';
    }
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write imu.csv");
  }
  for (std::size_t k = 0; k < data.scans.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.csv", k);
    std::ofstream os = open_out(dir / "scans" / name);
    const RawScan& scan = data.scans[k];
    const bool lab = data.labeled();
    os << "# stamp " << g17(scan.stamp) << '\n';
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
      const RawPoint& p = scan.points[i];
      os << g9(p.xyz.x()) << ',' << g9(p.xyz.y()) << ',' << g9(p.xyz.z()) << ',' << g9(p.t_rel) << ','
         << p.ring;
      if (lab) os << ',' << static_cast<int>(data.labels[k][i]);
      os << '\n';
    }
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write scan " + std::string(name));
  }
  if (!data.ground_truth.empty()) {
    write_trajectory(data.ground_truth, dir / "gt.txt");
  }
}

Dataset read_dataset(const fs::path& dir) {
  Dataset data;
  {
    std::ifstream is = open_in(dir / "meta.txt");
    data.meta = read_meta(is, (dir / "meta.txt").string());
  }
  {
    const fs::path file = dir / "imu.csv";
    std::ifstream is = open_in(file);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (blank(line) || line[0] == '#') continue;
      const auto f = split(line, ',');
      if (f.size() != 7) format_error(file.string(), n, "expected t,gx,gy,gz,ax,ay,az");
      double v[7];
      for (int i = 0; i < 7; ++i) v[i] = parse_double(f[static_cast<std::size_t>(i)], file.string(), n);
      if (!data.imu.empty() && !(v[0] > data.imu.back().t)) {
        format_error(file.string(), n, "IMU stamps must strictly increase");
      }
      data.imu.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
    }
    if (data.imu.size() < 2) format_error(file.string(), n, "IMU stream needs at least two samples");
  }

  const fs::path scan_dir = dir / "scans";
  if (!fs::is_directory(scan_dir)) {
    throw Error(ErrorCode::FormatError, scan_dir.string() + ": missing scans directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(scan_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawScan> scans;
  std::vector<std::vector<char>> labels;
  int labeled = 0;
  for (const fs::path& f : files) {
    std::vector<char> lab;
    bool has = false;
    scans.push_back(read_scan(f, lab, has));
    labeled += has ? 1 : 0;
    labels.push_back(std::move(lab));
  }
  if (labeled != 0 && labeled != static_cast<int>(files.size())) {
    throw Error(ErrorCode::FormatError, scan_dir.string() + ": labels present in only some scans");
  }
  std::vector<std::size_t> order(scans.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scans[a].stamp < scans[b].stamp; });
  for (const std::size_t i : order) {
    data.scans.push_back(std::move(scans[i]));
    if (labeled) data.labels.push_back(std::move(labels[i]));
  }

  const double t_lo = data.imu.front().t;
  const double t_hi = data.imu.back().t;
  for (const RawScan& s : data.scans) {
    if (s.stamp < t_lo - 1e-9 || s.stamp + data.meta.sweep_period > t_hi + 1e-9) {
      throw Error(ErrorCode::ClockSkew,
                  "sweep at " + g17(s.stamp) + " lies outside the IMU stream [" + g17(t_lo) + ", " +
                      g17(t_hi) + "]");
    }
  }
  if (fs::exists(dir / "gt.txt")) {
    data.ground_truth = read_trajectory(dir / "gt.txt");
  }
  return data;
}

}  // namespace vislio
