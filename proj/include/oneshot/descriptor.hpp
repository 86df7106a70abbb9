#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/geometry.hpp"
#include "oneshot/segmentation.hpp"

namespace oneshot {

/// Fixed-length segment descriptor, stored as float32 like every file format
/// that carries descriptors.
struct Descriptor {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool is_finite() const;
  bool operator==(const Descriptor&) const = default;
};

/// Euclidean distance accumulated in double precision, dimension by dimension.
double descriptor_distance(const Descriptor& a, const Descriptor& b);

inline constexpr std::size_t kHandcraftedDim = 21;
inline constexpr std::size_t kHeightBins = 10;

/// Layout of the hand-crafted descriptor.
enum HandcraftedFeature : std::size_t {
  kLinearity = 0,
  kPlanarity,
  kSphericity,
  kOmnivariance,
  kAnisotropy,
  kEigenentropy,
  kCurvatureChange,
  kExtent0,
  kExtent1,
  kExtent2,
  kLogPointCount,
  kHeightHistogram,  // 10 bins follow
};

/// Double-precision hand-crafted features; throws DegenerateError for fewer
/// than 4 points or a single repeated point.
std::array<double, kHandcraftedDim> handcrafted_features(std::span<const Point3> points);
Descriptor describe_handcrafted(const Segment& seg);

inline constexpr int kVoxelX = 32;
inline constexpr int kVoxelY = 32;
inline constexpr int kVoxelZ = 16;

/// Occupancy grid in the segment's aligned frame: z up, x along the dominant
/// horizontal principal direction.
struct VoxelGrid {
  /// kVoxelX * kVoxelY * kVoxelZ cells, index x + kVoxelX * (y + kVoxelY * z).
  std::vector<std::uint8_t> occupancy;
  double voxel_size = 0.0;
  /// Minimum corner of the aligned bounding box, in aligned coordinates.
  Point3 origin = Point3::Zero();
  /// Maps aligned coordinates back to the segment's frame.
  SE3 aligned_to_segment;

  static constexpr std::size_t index(int x, int y, int z) {
    return static_cast<std::size_t>(x + kVoxelX * (y + kVoxelY * z));
  }
  bool occupied(int x, int y, int z) const { return occupancy[index(x, y, z)] != 0; }
  std::size_t occupied_count() const;
};

/// Smallest voxel size used when a segment has no spatial extent.
inline constexpr double kMinVoxelSize = 1e-3;

VoxelGrid voxelize(const Segment& seg);

void write_voxel_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_voxel_grid(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_voxel_grid(const VoxelGrid& grid);
VoxelGrid decode_voxel_grid(std::span<const std::uint8_t> bytes, const std::string& context = "OSVX");

struct PixelBox {
  int u_min = 0;
  int v_min = 0;
  int u_max = 0;
  int v_max = 0;
};

struct ImagePatch {
  PixelBox bbox;
  double visible_fraction = 0.0;
  std::uint32_t image_id = 0;
};

inline constexpr double kMinVisibleFraction = 0.5;

/// Bounding box of the segment's projection, inflated by `margin` times its
/// width/height on each side and clamped to the image. Empty when less than
/// half of the points are visible or the box has zero area.
std::optional<ImagePatch> extract_patch(const Segment& seg, const PinholeCamera& cam, double margin,
                                        std::uint32_t image_id = 0);

/// Embedding records keyed by (scan id, segment id).
using EmbeddingKey = std::pair<std::uint32_t, std::uint32_t>;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Throws DataError on a duplicate key or a dimension mismatch.
  void insert(EmbeddingKey key, Descriptor d);
  const Descriptor* find(EmbeddingKey key) const;
  /// Adds every record of `other`; dims must agree unless one table is empty.
  void merge(const EmbeddingTable& other);

  const std::map<EmbeddingKey, Descriptor>& records() const { return records_; }

 private:
  std::size_t dim_ = 0;
  std::map<EmbeddingKey, Descriptor> records_;
};

EmbeddingTable decode_embeddings(std::span<const std::uint8_t> bytes, const std::string& context = "OSEM");
std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
/// Loads and merges several files; all must share one dim.
EmbeddingTable load_embeddings(std::span<const std::filesystem::path> paths);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

/// Pluggable segment description.
class DescriptorBackend {
 public:
  virtual ~DescriptorBackend() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Descriptor describe(const Segment& seg) const = 0;
};

class HandcraftedBackend final : public DescriptorBackend {
 public:
  std::string id() const override { return "handcrafted"; }
  std::size_t dim() const override { return kHandcraftedDim; }
  Descriptor describe(const Segment& seg) const override { return describe_handcrafted(seg); }
};

/// Looks descriptors up by (scan id, segment id) in a table produced by an
/// external trainer.
class EmbeddingFileBackend final : public DescriptorBackend {
 public:
  explicit EmbeddingFileBackend(EmbeddingTable table) : table_(std::move(table)) {}
  std::string id() const override { return "embedding-file"; }
  std::size_t dim() const override { return table_.dim(); }
  Descriptor describe(const Segment& seg) const override;

 private:
  EmbeddingTable table_;
};

struct DescriptorConfig {
  /// "handcrafted" or "embedding-file".
  std::string backend = "handcrafted";
  std::vector<std::filesystem::path> embedding_files;
};

std::unique_ptr<DescriptorBackend> make_descriptor_backend(const DescriptorConfig& cfg);

}  // namespace oneshot
