#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oneshot/geometry.hpp"

namespace oneshot {

/// One LiDAR revolution in the sensor frame.
struct Scan {
  std::uint32_t id = 0;
  Points3 points;
  /// Empty, or one reflectance value per point.
  std::vector<float> intensities;
  double timestamp = 0.0;
  /// Set when the reader accepted the file but found something suspicious
  /// (e.g. zero points).
  std::optional<std::string> warning;

  bool has_intensities() const { return !intensities.empty(); }
};

struct TrajectoryEntry {
  std::uint32_t scan_id = 0;
  SE3 T_world_sensor;
};

using Trajectory = std::vector<TrajectoryEntry>;

/// Reads a KITTI velodyne .bin file: records of four little-endian float32
/// (x, y, z, intensity).
Scan read_kitti_scan(const std::filesystem::path& path, std::uint32_t id = 0);
void write_kitti_scan(const std::filesystem::path& path, const Scan& scan);

/// Reads a KITTI odometry poses file (12 numbers per line, 3x4 row-major
/// camera pose) and returns LiDAR poses T_world_cam * T_cam_lidar. Scan ids
/// are the zero-based line numbers, blank lines excluded.
Trajectory read_kitti_poses(const std::filesystem::path& path, const SE3& T_cam_lidar = SE3::identity());
/// Writes poses in the same 12-number format. Entries are written in order;
/// scan ids are implied by position.
void write_kitti_poses(const std::filesystem::path& path, const Trajectory& trajectory);
/// One timestamp in seconds per line.
std::vector<double> read_kitti_times(const std::filesystem::path& path);

/// Reads the `Tr:` entry of a KITTI calib.txt (velodyne to cam0).
SE3 read_kitti_velo_to_cam(const std::filesystem::path& calib_txt);

/// Trajectories must have strictly increasing scan ids.
void validate_trajectory(const Trajectory& trajectory);
/// Pose of `scan_id`, if present.
std::optional<SE3> find_pose(const Trajectory& trajectory, std::uint32_t scan_id);

/// Emulates a sparser sensor: keeps the points of the source beams that are
/// nearest in elevation to each target beam.
Scan subsample_beams(const Scan& scan, const LidarIntrinsics& source, const LidarIntrinsics& target);
/// Source beam rows kept by subsample_beams, one per target beam.
std::vector<std::size_t> select_source_beams(const LidarIntrinsics& source, const LidarIntrinsics& target);

/// Sorted `*.bin` files in a directory; the numeric file stem is the scan id.
std::vector<std::pair<std::uint32_t, std::filesystem::path>> list_kitti_scans(const std::filesystem::path& dir);

}  // namespace oneshot
