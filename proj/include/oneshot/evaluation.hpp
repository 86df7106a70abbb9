#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/dataset.hpp"
#include "oneshot/descriptor.hpp"
#include "oneshot/pipeline.hpp"
#include "oneshot/segment_map.hpp"

namespace oneshot {

/// Voxelized occupancy IoU of two point sets (same frame) over their union
/// bounding box. Disjoint bounding boxes short-circuit to 0.
double overlap_iou(std::span<const Point3> a, std::span<const Point3> b, double voxel_size);

struct CorrespondenceLabel {
  std::uint32_t scan_a = 0;
  std::uint32_t segment_a = 0;
  std::uint32_t scan_b = 0;
  std::uint32_t segment_b = 0;
  double overlap_iou = 0.0;
  bool is_match = false;
};

/// Labels every pair (a, b). Sensor-frame segments are moved to the world
/// frame with their scan's pose; world-frame segments are used as given.
std::vector<CorrespondenceLabel> label_correspondences(std::span<const Segment> segments_a,
                                                       std::span<const Segment> segments_b,
                                                       const Trajectory& poses, double iou_threshold,
                                                       double voxel_size = 0.2);

void write_labels_csv(const std::filesystem::path& path, std::span<const CorrespondenceLabel> labels);
std::vector<CorrespondenceLabel> read_labels_csv(const std::filesystem::path& path);

struct CdfPoint {
  double distance_m = 0.0;
  double probability = 0.0;
};

/// Distance traveled from each start frame to the first success at or after
/// it; infinity when no later frame succeeds. `arc` holds the cumulative
/// trajectory length at each frame.
std::vector<double> wakeup_distances(std::span<const std::uint8_t> success, std::span<const double> arc);

/// Fraction of distances <= x.
double cdf_at(std::span<const double> distances, double x);

/// CDF sampled every `step` meters from 0 up to at least `max_distance`
/// and the largest finite distance.
std::vector<CdfPoint> wakeup_cdf(std::span<const double> distances, double step = 0.1, double max_distance = 0.0);

struct WakeupRecord {
  std::uint32_t scan_id = 0;
  bool success = false;
  double translation_error = std::numeric_limits<double>::infinity();
  double distance = std::numeric_limits<double>::infinity();
};

struct WakeupReport {
  std::vector<WakeupRecord> records;
  std::vector<CdfPoint> cdf;

  std::vector<double> distances() const;
};

/// A frame succeeds iff it was accepted and lies within `success_radius` of
/// ground truth. Results are taken in the given (traversal) order.
WakeupReport evaluate_wakeup(std::span<const LocalizationResult> results, const Trajectory& trajectory,
                             double success_radius = 2.0);

/// Width of the ICP correction histogram bins (m).
inline constexpr double kIcpHistogramBin = 0.05;

struct LocalizationReport {
  std::size_t queries = 0;
  std::size_t accepted = 0;
  std::size_t successes = 0;
  double recall = 0.0;
  /// 1 when nothing was accepted.
  double precision = 1.0;
  std::vector<std::uint8_t> success;
  std::vector<double> translation_errors;
  std::vector<double> yaw_errors_deg;

  /// (scan id, |translation of the ICP correction|) per success.
  std::vector<std::pair<std::uint32_t, double>> icp_corrections;
  double icp_mean = 0.0;
  double icp_std = 0.0;
  std::vector<std::size_t> icp_histogram;
};

LocalizationReport evaluate_localization(std::span<const LocalizationResult> results, const Trajectory& trajectory,
                                         double success_radius = 2.0);

/// Refines each successful pose with ICP of the query's segment points
/// against map points within `cfg.evaluation.icp_map_radius` and records the
/// correction magnitude. `scans` must hold a scan for every successful id.
/// Throws DataError when the map has no points.
void add_icp_errors(LocalizationReport& report, std::span<const LocalizationResult> results,
                    std::span<const Scan> scans, const SegmentMap& map, const PipelineConfig& cfg);

struct PRPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

struct LabeledDistance {
  double distance = 0.0;
  bool positive = false;
};

struct RetrievalReport {
  std::vector<PRPoint> curve;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Precision and recall with pairs at distance <= t predicted positive.
PRPoint precision_recall_at(std::span<const LabeledDistance> pairs, double t);

/// Sweeps t over every observed distance. AUC is the trapezoid area under
/// precision over recall, starting from recall 0 at the first precision.
/// Throws DataError when there are no positives.
RetrievalReport pr_sweep(std::span<const LabeledDistance> pairs);

/// Enumerates descriptor pairs from distinct scans; a pair is positive iff a
/// label marks it as a match (in either order).
RetrievalReport evaluate_retrieval(const EmbeddingTable& descriptors, std::span<const CorrespondenceLabel> labels);

void write_wakeup_csv(const std::filesystem::path& path, std::span<const CdfPoint> cdf);
void write_pr_csv(const std::filesystem::path& path, std::span<const PRPoint> curve);
void write_loc_errors_csv(const std::filesystem::path& path,
                          std::span<const std::pair<std::uint32_t, double>> corrections);

struct Summary {
  std::optional<LocalizationReport> localization;
  std::optional<RetrievalReport> retrieval;
  std::optional<WakeupReport> wakeup;
};

std::string summary_json(const Summary& summary);

}  // namespace oneshot
