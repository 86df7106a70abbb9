#include "oneshot/descriptor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

namespace {

constexpr double kEigenFloor = 1e-12;
constexpr std::uint32_t kVoxelVersion = 1;
constexpr std::size_t kVoxelCells = static_cast<std::size_t>(kVoxelX) * kVoxelY * kVoxelZ;

}  // namespace

bool Descriptor::is_finite() const {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  if (a.dim() != b.dim()) throw DataError("descriptor dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::array<double, kHandcraftedDim> handcrafted_features(std::span<const Point3> points) {
  if (points.size() < 4) throw DegenerateError("hand-crafted descriptor needs at least 4 points");
  const Point3 mean = centroid_of(points);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point3& p : points) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  const double trace = cov.trace();
  if (!(trace > 0.0)) throw DegenerateError("all segment points are identical");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
  const double sum = lambda.sum();
  const double e1 = std::max(lambda[2] / sum, kEigenFloor);
  const double e2 = std::max(lambda[1] / sum, kEigenFloor);
  const double e3 = std::max(lambda[0] / sum, kEigenFloor);

  std::array<double, kHandcraftedDim> f{};
  f[kLinearity] = (e1 - e2) / e1;
  f[kPlanarity] = (e2 - e3) / e1;
  f[kSphericity] = e3 / e1;
  f[kOmnivariance] = std::cbrt(e1 * e2 * e3);
  f[kAnisotropy] = (e1 - e3) / e1;
  f[kEigenentropy] = -(e1 * std::log(e1) + e2 * std::log(e2) + e3 * std::log(e3));
  f[kCurvatureChange] = e3;

  const Eigen::Matrix3d axes = eig.eigenvectors();
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -zmin;
  for (const Point3& p : points) {
    const Eigen::Vector3d a = axes.transpose() * (p - mean);
    lo = lo.cwiseMin(a);
    hi = hi.cwiseMax(a);
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  std::array<double, 3> extents{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  std::sort(extents.begin(), extents.end(), std::greater<>());
  f[kExtent0] = extents[0];
  f[kExtent1] = extents[1];
  f[kExtent2] = extents[2];
  f[kLogPointCount] = std::log1p(static_cast<double>(points.size()));

  const double height = zmax - zmin;
  const double weight = 1.0 / static_cast<double>(points.size());
  for (const Point3& p : points) {
    std::size_t bin = 0;
    if (height > 0.0) {
      bin = std::min(static_cast<std::size_t>((p.z() - zmin) / height * kHeightBins), kHeightBins - 1);
    }
    f[kHeightHistogram + bin] += weight;
  }
  return f;
}

Descriptor describe_handcrafted(const Segment& seg) {
  const auto f = handcrafted_features(seg.points);
  Descriptor d;
  d.values.assign(f.begin(), f.end());
  return d;
}

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count_if(occupancy.begin(), occupancy.end(), [](std::uint8_t v) { return v != 0; }));
}

VoxelGrid voxelize(const Segment& seg) {
  if (seg.points.empty()) throw DegenerateError("cannot voxelize an empty segment");
  const Point3 c = centroid_of(seg.points);

  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Point3& p : seg.points) {
    const Eigen::Vector2d d = (p - c).head<2>();
    cov += d * d.transpose();
  }
  Eigen::Vector2d axis(1.0, 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double big = eig.eigenvalues()[1];
  const double small = eig.eigenvalues()[0];
  // Isotropic footprints keep the input x axis.
  if (big > 0.0 && big - small > 1e-9 * big) axis = eig.eigenvectors().col(1).normalized();
  double third_moment = 0.0;
  for (const Point3& p : seg.points) {
    const double s = (p - c).head<2>().dot(axis);
    third_moment += s * s * s;
  }
  if (third_moment < 0.0) axis = -axis;

  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(axis.x(), axis.y(), 0.0);
  r.col(2) = Eigen::Vector3d::UnitZ();
  r.col(1) = r.col(2).cross(r.col(0));

  Points3 aligned;
  aligned.reserve(seg.points.size());
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const Point3& p : seg.points) {
    aligned.push_back(r.transpose() * (p - c));
    lo = lo.cwiseMin(aligned.back());
    hi = hi.cwiseMax(aligned.back());
  }
  const Eigen::Vector3d ext = hi - lo;
  double s = std::max({ext.x() / kVoxelX, ext.y() / kVoxelY, ext.z() / kVoxelZ});
  if (!(s > 0.0)) s = kMinVoxelSize;

  VoxelGrid grid;
  grid.occupancy.assign(kVoxelCells, 0);
  grid.voxel_size = s;
  grid.origin = lo;
  grid.aligned_to_segment = SE3(r, c);
  for (const Point3& a : aligned) {
    const Eigen::Vector3d f = (a - lo) / s;
    const int x = std::clamp(static_cast<int>(std::floor(f.x())), 0, kVoxelX - 1);
    const int y = std::clamp(static_cast<int>(std::floor(f.y())), 0, kVoxelY - 1);
    const int z = std::clamp(static_cast<int>(std::floor(f.z())), 0, kVoxelZ - 1);
    grid.occupancy[VoxelGrid::index(x, y, z)] = 1;
  }
  return grid;
}

std::vector<std::uint8_t> encode_voxel_grid(const VoxelGrid& grid) {
  if (grid.occupancy.size() != kVoxelCells) throw DataError("voxel grid has wrong cell count");
  ByteWriter w;
  w.put_magic("OSVX");
  w.put_u32(kVoxelVersion);
  w.put_u32(kVoxelX);
  w.put_u32(kVoxelY);
  w.put_u32(kVoxelZ);
  w.put_f32(static_cast<float>(grid.voxel_size));
  w.put_f32(static_cast<float>(grid.origin.x()));
  w.put_f32(static_cast<float>(grid.origin.y()));
  w.put_f32(static_cast<float>(grid.origin.z()));
  std::vector<std::uint8_t> bits(kVoxelCells / 8, 0);
  for (std::size_t i = 0; i < kVoxelCells; ++i) {
    if (grid.occupancy[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  w.put_bytes(bits.data(), bits.size());
  return w.release();
}

VoxelGrid decode_voxel_grid(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("OSVX");
  if (const auto v = r.get_u32(); v != kVoxelVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(v));
  }
  const std::uint32_t dx = r.get_u32();
  const std::uint32_t dy = r.get_u32();
  const std::uint32_t dz = r.get_u32();
  if (dx != kVoxelX || dy != kVoxelY || dz != kVoxelZ) throw FormatError(context + ": unexpected grid dimensions");
  VoxelGrid grid;
  grid.voxel_size = r.get_f32();
  const float ox = r.get_f32();
  const float oy = r.get_f32();
  const float oz = r.get_f32();
  grid.origin = Point3(ox, oy, oz);
  const auto bits = r.get_bytes(kVoxelCells / 8);
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes");
  grid.occupancy.assign(kVoxelCells, 0);
  for (std::size_t i = 0; i < kVoxelCells; ++i) grid.occupancy[i] = (bits[i / 8] >> (i % 8)) & 1u;
  return grid;
}

void write_voxel_grid(const std::filesystem::path& path, const VoxelGrid& grid) {
  write_binary_file(path, encode_voxel_grid(grid));
}

VoxelGrid read_voxel_grid(const std::filesystem::path& path) {
  return decode_voxel_grid(read_binary_file(path), path.string());
}

Descriptor EmbeddingFileBackend::describe(const Segment& seg) const {
  const Descriptor* d = table_.find({seg.scan_id, seg.id});
  if (d == nullptr) {
    throw DataError("no embedding for scan " + std::to_string(seg.scan_id) + " segment " + std::to_string(seg.id));
  }
  return *d;
}

std::unique_ptr<DescriptorBackend> make_descriptor_backend(const DescriptorConfig& cfg) {
  if (cfg.backend == "handcrafted") return std::make_unique<HandcraftedBackend>();
  if (cfg.backend == "embedding-file") {
    if (cfg.embedding_files.empty()) throw ConfigError("embedding-file backend needs at least one embedding file");
    return std::make_unique<EmbeddingFileBackend>(load_embeddings(cfg.embedding_files));
  }
  throw ConfigError("unknown descriptor backend '" + cfg.backend + "'");
}

}  // namespace oneshot
