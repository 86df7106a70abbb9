#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "oneshot/dataset.hpp"
#include "oneshot/geometry.hpp"

namespace oneshot {

/// Oriented box; `pose` maps box-local coordinates (centered) to world.
struct Box {
  SE3 pose;
  Eigen::Vector3d size{1.0, 1.0, 1.0};
};

/// Vertical cylinder standing on `base_center`.
struct Cylinder {
  Point3 base_center = Point3::Zero();
  double radius = 0.5;
  double height = 1.0;
};

/// Finite rectangle in the local x-y plane of `pose`, centered at its origin.
struct Plane {
  SE3 pose;
  double width = 1.0;   // along local x
  double length = 1.0;  // along local y
};

using Primitive = std::variant<Box, Cylinder, Plane>;

/// Desk-scale test substrate: a handful of primitives over an optional
/// infinite ground plane z = ground_height.
struct SyntheticWorld {
  std::vector<Primitive> objects;
  std::optional<double> ground_height = 0.0;

  void validate() const;
};

/// Label used for points on the ground plane.
inline constexpr int kGroundLabel = -1;

struct Ray {
  Point3 origin;
  Eigen::Vector3d direction;  // unit length
};

/// Smallest positive ray parameter at which the ray hits the primitive.
std::optional<double> intersect(const Primitive& prim, const Ray& ray);
/// Unsigned distance from `p` to the primitive's surface.
double surface_distance(const Primitive& prim, const Point3& p);

struct WorldHit {
  double range = 0.0;
  int label = kGroundLabel;
};
/// Nearest hit among all objects and the ground within [min_range, max_range].
std::optional<WorldHit> cast_ray(const SyntheticWorld& world, const Ray& ray, double min_range, double max_range);

struct SimulatedScan {
  Scan scan;
  /// Per point: object index into world.objects, or kGroundLabel.
  std::vector<int> labels;
};

/// Ray-casts one revolution from `pose` (T_world_sensor). Rays go through
/// the cell centers of the range image; Gaussian range noise with standard
/// deviation `noise_sigma` is drawn from a generator seeded with `seed`.
SimulatedScan simulate_scan(const SyntheticWorld& world, const SE3& pose, const LidarIntrinsics& intr,
                            double noise_sigma, std::uint64_t seed = 0);

struct WorldGenerationParams {
  std::size_t object_count = 30;
  /// Objects are scattered along x in [-margin, length + margin].
  double length = 60.0;
  double margin = 10.0;
  /// Lateral band |y| in [min_lateral, max_lateral] on both sides of the path.
  double min_lateral = 3.5;
  double max_lateral = 16.0;
  /// Minimum horizontal gap between object footprints.
  double min_separation = 1.5;
  double plane_probability = 0.1;
  double ground_height = 0.0;
};

/// Random world of boxes, cylinders and upright walls along the x axis.
SyntheticWorld generate_world(const WorldGenerationParams& params, std::uint64_t seed);

/// Sensor poses along +x at height `sensor_height`, starting at x0 and spaced
/// `spacing` meters apart.
Trajectory straight_trajectory(std::size_t count, double x0, double spacing, double sensor_height,
                               std::uint32_t first_id = 0);

std::string format_world(const SyntheticWorld& world);
SyntheticWorld parse_world(std::string_view toml_text, const std::string& source_name = "<string>");
SyntheticWorld load_world(const std::filesystem::path& path);
void save_world(const std::filesystem::path& path, const SyntheticWorld& world);

}  // namespace oneshot
