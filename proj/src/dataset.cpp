#include "oneshot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

namespace {

constexpr std::size_t kKittiRecordBytes = 16;

std::vector<double> split_numbers(const std::string& line, const std::filesystem::path& path, std::size_t line_no) {
  std::istringstream is(line);
  std::vector<double> values;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
    }
  }
  return values;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Scan read_kitti_scan(const std::filesystem::path& path, std::uint32_t id) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  if (bytes.size() % kKittiRecordBytes != 0) {
    throw DataError(path.string() + ": malformed length " + std::to_string(bytes.size()) +
                    " bytes (not a multiple of 16)");
  }
  Scan scan;
  scan.id = id;
  const std::size_t n = bytes.size() / kKittiRecordBytes;
  scan.points.reserve(n);
  scan.intensities.reserve(n);
  ByteReader reader(bytes, path.string());
  for (std::size_t i = 0; i < n; ++i) {
    const float x = reader.get_f32();
    const float y = reader.get_f32();
    const float z = reader.get_f32();
    const float intensity = reader.get_f32();
    scan.points.emplace_back(x, y, z);
    scan.intensities.push_back(intensity);
  }
  if (n == 0) scan.warning = "scan file '" + path.string() + "' contains no points";
  return scan;
}

void write_kitti_scan(const std::filesystem::path& path, const Scan& scan) {
  if (scan.has_intensities() && scan.intensities.size() != scan.points.size()) {
    throw DataError("scan intensities do not match the point count");
  }
  ByteWriter w;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Point3& p = scan.points[i];
    w.put_f32(static_cast<float>(p.x()));
    w.put_f32(static_cast<float>(p.y()));
    w.put_f32(static_cast<float>(p.z()));
    w.put_f32(scan.has_intensities() ? scan.intensities[i] : 0.0f);
  }
  write_binary_file(path, w.bytes());
}

Trajectory read_kitti_poses(const std::filesystem::path& path, const SE3& T_cam_lidar) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open poses file '" + path.string() + "'");
  Trajectory out;
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t scan_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto v = split_numbers(line, path, line_no);
    if (v.size() != 12) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 12 numbers, got " +
                      std::to_string(v.size()));
    }
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
    SE3 T_world_cam;
    try {
      T_world_cam = SE3::from_matrix(m);
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back({scan_id++, T_world_cam * T_cam_lidar});
  }
  return out;
}

void write_kitti_poses(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& e : trajectory) {
    const Eigen::Matrix4d m = e.T_world_sensor.matrix();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) os << ((r || c) ? " " : "") << m(r, c);
    os << "\n";
  }
  write_text_file(path, os.str());
}

std::vector<double> read_kitti_times(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open times file '" + path.string() + "'");
  std::vector<double> times;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto v = split_numbers(line, path, line_no);
    if (v.size() != 1) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected one timestamp");
    times.push_back(v[0]);
  }
  return times;
}

SE3 read_kitti_velo_to_cam(const std::filesystem::path& calib_txt) {
  std::ifstream in(calib_txt);
  if (!in) throw DataError("cannot open calibration '" + calib_txt.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("Tr:", 0) != 0) continue;
    const auto v = split_numbers(line.substr(3), calib_txt, line_no);
    if (v.size() != 12) throw DataError(calib_txt.string() + ": Tr entry needs 12 numbers");
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
    return SE3::from_matrix(m);
  }
  throw DataError(calib_txt.string() + ": no 'Tr:' entry");
}

void validate_trajectory(const Trajectory& trajectory) {
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (trajectory[i].scan_id <= trajectory[i - 1].scan_id) {
      throw DataError("trajectory scan ids must be strictly increasing (at entry " + std::to_string(i) + ")");
    }
  }
}

std::optional<SE3> find_pose(const Trajectory& trajectory, std::uint32_t scan_id) {
  const auto it = std::lower_bound(trajectory.begin(), trajectory.end(), scan_id,
                                   [](const TrajectoryEntry& e, std::uint32_t id) { return e.scan_id < id; });
  if (it != trajectory.end() && it->scan_id == scan_id) return it->T_world_sensor;
  // Fall back to a linear search for unsorted input.
  for (const auto& e : trajectory)
    if (e.scan_id == scan_id) return e.T_world_sensor;
  return std::nullopt;
}

std::vector<std::size_t> select_source_beams(const LidarIntrinsics& source, const LidarIntrinsics& target) {
  source.validate();
  target.validate();
  if (target.rows() > source.rows()) {
    throw ConfigError("target beam count exceeds source beam count");
  }
  const auto& src = source.beam_elevations;
  const double top_gap = src.size() > 1 ? src[0] - src[1] : 0.0;
  const double bottom_gap = src.size() > 1 ? src[src.size() - 2] - src.back() : 0.0;
  const double upper = src.front() + 0.5 * top_gap + 1e-12;
  const double lower = src.back() - 0.5 * bottom_gap - 1e-12;
  std::vector<std::size_t> rows;
  for (double e : target.beam_elevations) {
    if (e > upper || e < lower) {
      throw ConfigError("target beam at " + std::to_string(rad2deg(e)) +
                        " deg lies outside the source vertical field of view");
    }
    rows.push_back(nearest_beam(src, e));
  }
  return rows;
}

Scan subsample_beams(const Scan& scan, const LidarIntrinsics& source, const LidarIntrinsics& target) {
  const std::vector<std::size_t> rows = select_source_beams(source, target);
  std::vector<bool> keep_row(source.rows(), false);
  for (std::size_t r : rows) keep_row[r] = true;

  Scan out;
  out.id = scan.id;
  out.timestamp = scan.timestamp;
  out.warning = scan.warning;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const auto cell = spherical_project(source, scan.points[i]);
    if (!cell || !keep_row[static_cast<std::size_t>(cell->row)]) continue;
    out.points.push_back(scan.points[i]);
    if (scan.has_intensities()) out.intensities.push_back(scan.intensities[i]);
  }
  return out;
}

std::vector<std::pair<std::uint32_t, std::filesystem::path>> list_kitti_scans(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: '" + dir.string() + "'");
  std::vector<std::pair<std::uint32_t, std::filesystem::path>> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); })) {
      continue;
    }
    out.emplace_back(static_cast<std::uint32_t>(std::stoul(stem)), entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace oneshot
