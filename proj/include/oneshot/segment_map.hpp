#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oneshot/descriptor.hpp"
#include "oneshot/kdtree.hpp"
#include "oneshot/segmentation.hpp"

namespace oneshot {

struct MapSegment {
  /// World-frame segment. Points are stored at float32 precision.
  Segment segment;
  Descriptor descriptor;
};

struct MapMetadata {
  std::string backend_id = "handcrafted";
  std::size_t dim = 0;
  std::string creation_info;
  bool points_stripped = false;

  bool operator==(const MapMetadata&) const = default;
};

struct MatchCandidate {
  std::uint32_t query_segment_id = 0;
  std::uint32_t map_segment_id = 0;
  double descriptor_distance = 0.0;
  Point3 query_centroid = Point3::Zero();
  Point3 map_centroid = Point3::Zero();
};

/// Immutable localization map: world-frame segments with descriptors and an
/// exact k-d tree over the descriptors.
class SegmentMap {
 public:
  SegmentMap() = default;

  const std::vector<MapSegment>& segments() const { return segments_; }
  const MapMetadata& metadata() const { return metadata_; }
  std::size_t size() const { return segments_.size(); }
  std::size_t dim() const { return metadata_.dim; }
  bool has_points() const { return !metadata_.points_stripped; }
  const KdTree& index() const { return index_; }

  /// Segment with the given id, or nullptr.
  const MapSegment* find(std::uint32_t id) const;
  /// Copy without raw points (deployment-size map).
  SegmentMap without_points() const;

  friend SegmentMap build_map(std::vector<MapSegment> segments, MapMetadata metadata);

 private:
  std::vector<MapSegment> segments_;
  MapMetadata metadata_;
  KdTree index_;
};

/// Sorts segments by id and indexes their descriptors (leaf size 16).
/// Throws DataError for an empty input, duplicate ids, non-finite values or
/// mixed descriptor dims. `metadata.dim` is filled in from the descriptors.
SegmentMap build_map(std::vector<MapSegment> segments, MapMetadata metadata);

/// The `k` nearest map segments in descriptor space, ascending distance, ties
/// by lower map segment id.
std::vector<MatchCandidate> knn(const SegmentMap& map, const Descriptor& query, std::size_t k,
                                std::uint32_t query_segment_id = 0, const Point3& query_centroid = Point3::Zero());

inline constexpr std::uint32_t kMapVersion = 1;

std::vector<std::uint8_t> encode_map(const SegmentMap& map, bool include_points = true);
SegmentMap decode_map(std::span<const std::uint8_t> bytes, const std::string& context = "OSLM");
void save_map(const SegmentMap& map, const std::filesystem::path& path, bool include_points = true);
SegmentMap load_map(const std::filesystem::path& path);

}  // namespace oneshot
