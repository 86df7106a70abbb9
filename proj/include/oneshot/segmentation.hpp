#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

#include "oneshot/dataset.hpp"
#include "oneshot/geometry.hpp"

namespace oneshot {

/// Beams x columns depth grid. Row 0 is the top beam.
struct RangeImage {
  int rows = 0;
  int cols = 0;
  /// Row-major; 0 marks an empty cell.
  std::vector<double> range;
  /// Row-major; index into the source scan, -1 for empty cells.
  std::vector<std::int64_t> point_index;
  /// Row-major copy of the sensor-frame point held by each cell.
  Points3 cell_points;
  /// Points that could not be placed (out of gates, between beams, or losing
  /// a cell collision).
  std::size_t dropped = 0;
  /// Beam elevations (radians) and column step, needed for neighbor angles.
  std::vector<double> beam_elevations;
  double azimuth_step = 0.0;

  std::size_t cell(int row, int col) const { return static_cast<std::size_t>(row) * cols + col; }
  bool empty(int row, int col) const { return range[cell(row, col)] == 0.0; }
};

RangeImage build_range_image(const Scan& scan, const LidarIntrinsics& intr);

struct SegmentationConfig {
  /// Neighbors merge when the angle beta exceeds this (radians).
  double theta_seg = 10.0 * std::numbers::pi / 180.0;
  /// Maximum ground inclination (radians).
  double tau_ground = 10.0 * std::numbers::pi / 180.0;
  /// Height of the sensor above the ground (m), used to seed ground labels.
  double sensor_height = 1.73;
  std::size_t min_segment_points = 40;
  std::size_t max_segment_points = 15000;
  bool remove_ground = true;

  void validate() const;
};

enum class Frame : std::uint8_t { kSensor = 0, kWorld = 1 };

struct Segment {
  std::uint32_t id = 0;
  std::uint32_t scan_id = 0;
  Frame frame = Frame::kSensor;
  Points3 points;
  Point3 centroid = Point3::Zero();
  /// Indices into the source scan (empty for segments loaded from a map).
  std::vector<std::int64_t> point_indices;

  void recompute_centroid();
  /// Copy with points and centroid mapped through `T`, tagged with `frame`.
  Segment transformed(const SE3& T, Frame frame) const;
};

Point3 centroid_of(std::span<const Point3> points);

/// Ground mask over the cells of `img` (1 = ground).
std::vector<std::uint8_t> label_ground(const RangeImage& img, const SegmentationConfig& cfg);

/// Angle between the beam of the farther return and the line joining the two
/// returns, for neighbors at ranges `ra`, `rb` separated by `alpha`.
double neighbor_angle(double ra, double rb, double alpha);

/// Connected components of non-ground cells under the depth-discontinuity
/// criterion; components whose size lies within the configured bounds
/// become segments, numbered from 0 in discovery order.
std::vector<Segment> segment(const RangeImage& img, std::span<const std::uint8_t> ground_mask,
                             const SegmentationConfig& cfg, std::uint32_t scan_id = 0);

/// Convenience: range image, ground labels and segments in one call.
std::vector<Segment> segment_scan(const Scan& scan, const LidarIntrinsics& intr, const SegmentationConfig& cfg);

/// Writes an ASCII PLY with x y z and a per-vertex `segment_id` property.
void write_segments_ply(const std::filesystem::path& path, std::span<const Segment> segments);

}  // namespace oneshot
