#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oneshot/dataset.hpp"
#include "oneshot/descriptor.hpp"
#include "oneshot/segment_map.hpp"
#include "oneshot/segmentation.hpp"
#include "oneshot/verification.hpp"

namespace oneshot {

struct MapBuildConfig {
  /// Segments closer than this (world centroids) are dedup candidates.
  double dedup_radius = 0.5;
  /// ... and merge when their descriptor distance is at or below this
  /// percentile of the database's pairwise descriptor distances.
  double dedup_percentile = 10.0;
  bool dedup = true;
  bool include_points = true;
};

struct EvaluationConfig {
  double success_radius = 2.0;
  double iou_threshold = 0.3;
  double iou_voxel_size = 0.2;
  double icp_map_radius = 40.0;
};

struct DatasetConfig {
  std::filesystem::path scans;
  std::filesystem::path poses;
  std::filesystem::path times;
  /// KITTI calib.txt; when set, poses are converted to LiDAR poses.
  std::filesystem::path kitti_calib;
  std::optional<double> time_begin;
  std::optional<double> time_end;
};

struct PipelineConfig {
  LidarIntrinsics lidar = vlp16_intrinsics();
  std::optional<PinholeCamera> camera;
  /// When set, input scans come from this denser sensor and are subsampled to
  /// `lidar` before segmentation.
  std::optional<LidarIntrinsics> source_lidar;
  SegmentationConfig segmentation;
  DescriptorConfig descriptor;
  std::size_t k = 5;
  VerificationConfig verification;
  IcpConfig icp;
  MapBuildConfig map;
  EvaluationConfig evaluation;
  DatasetConfig dataset;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

/// Parses a pipeline TOML. Relative paths are resolved against `base_dir`.
/// Throws ConfigError for bad values or referenced files that do not exist.
PipelineConfig parse_pipeline_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                     const std::string& source_name = "<string>");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string format_pipeline_config(const PipelineConfig& cfg);

struct StageTimings {
  double segmentation_ms = 0.0;
  double description_ms = 0.0;
  double matching_ms = 0.0;
  double verification_ms = 0.0;
  double total_ms = 0.0;

  double stage_sum() const { return segmentation_ms + description_ms + matching_ms + verification_ms; }
};

struct LocalizationResult {
  std::uint32_t scan_id = 0;
  PoseEstimate pose;
  StageTimings timings;
  std::size_t segment_count = 0;
  std::size_t candidate_count = 0;
  /// Stage that produced the rejection ("segmentation", "matching",
  /// "verification"); empty when accepted.
  std::string rejected_stage;
};

/// Localizes scans against one immutable map. Safe to share across threads.
class Localizer {
 public:
  Localizer(std::shared_ptr<const SegmentMap> map, std::shared_ptr<const DescriptorBackend> backend,
            PipelineConfig cfg);

  LocalizationResult localize(const Scan& scan) const;
  /// Results in input order; uses up to `cfg.threads` workers.
  std::vector<LocalizationResult> localize_all(std::span<const Scan> scans) const;

  const SegmentMap& map() const { return *map_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const SegmentMap> map_;
  std::shared_ptr<const DescriptorBackend> backend_;
  PipelineConfig cfg_;
};

/// One-shot convenience wrapper: creates the backend from `cfg` and runs the
/// full pipeline on `scan`.
LocalizationResult localize_scan(const SegmentMap& map, const Scan& scan, const PipelineConfig& cfg);

/// Segments every scan, moves segments into the world frame with the scan's
/// trajectory pose, describes them, removes duplicates and builds the map.
SegmentMap build_map_from_trajectory(std::span<const Scan> scans, const Trajectory& trajectory,
                                     const PipelineConfig& cfg, const DescriptorBackend& backend);
SegmentMap build_map_from_trajectory(std::span<const Scan> scans, const Trajectory& trajectory,
                                     const PipelineConfig& cfg);

/// Applies the source-to-target beam subsampling when configured.
Scan prepare_scan(const Scan& scan, const PipelineConfig& cfg);

/// Percentile (linear interpolation between order statistics) of `values`.
double percentile(std::vector<double> values, double pct);

/// One JSON object per result, as written by `oneshot localize`.
std::string result_to_json_line(const LocalizationResult& result);
LocalizationResult result_from_json_line(const std::string& line);
std::vector<LocalizationResult> read_results_jsonl(const std::filesystem::path& path);

}  // namespace oneshot
