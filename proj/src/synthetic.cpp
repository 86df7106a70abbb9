#include "oneshot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"
#include "toml_util.hpp"

namespace oneshot {

namespace {

constexpr double kHitEpsilon = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<double> intersect_box(const Box& box, const Ray& ray) {
  const Eigen::Matrix3d rt = box.pose.rotation().transpose();
  const Eigen::Vector3d o = rt * (ray.origin - box.pose.translation());
  const Eigen::Vector3d d = rt * ray.direction;
  const Eigen::Vector3d half = 0.5 * box.size;
  double t_near = -kInf;
  double t_far = kInf;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - o[i]) / d[i];
    double t2 = (half[i] - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near > kHitEpsilon) return t_near;
  if (t_far > kHitEpsilon) return t_far;
  return std::nullopt;
}

std::optional<double> intersect_cylinder(const Cylinder& cyl, const Ray& ray) {
  const Eigen::Vector3d o = ray.origin - cyl.base_center;
  const Eigen::Vector3d& d = ray.direction;
  double best = kInf;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
    const double c = o.x() * o.x() + o.y() * o.y() - cyl.radius * cyl.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t <= kHitEpsilon) continue;
        const double z = o.z() + t * d.z();
        if (z >= 0.0 && z <= cyl.height) {
          best = std::min(best, t);
          break;
        }
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double cap : {0.0, cyl.height}) {
      const double t = (cap - o.z()) / d.z();
      if (t <= kHitEpsilon) continue;
      const double x = o.x() + t * d.x();
      const double y = o.y() + t * d.y();
      if (x * x + y * y <= cyl.radius * cyl.radius) best = std::min(best, t);
    }
  }
  if (best == kInf) return std::nullopt;
  return best;
}

std::optional<double> intersect_plane(const Plane& plane, const Ray& ray) {
  const Eigen::Matrix3d rt = plane.pose.rotation().transpose();
  const Eigen::Vector3d o = rt * (ray.origin - plane.pose.translation());
  const Eigen::Vector3d d = rt * ray.direction;
  if (std::abs(d.z()) < 1e-15) return std::nullopt;
  const double t = -o.z() / d.z();
  if (t <= kHitEpsilon) return std::nullopt;
  const double x = o.x() + t * d.x();
  const double y = o.y() + t * d.y();
  if (std::abs(x) > 0.5 * plane.width || std::abs(y) > 0.5 * plane.length) return std::nullopt;
  return t;
}

struct FootprintVisitor {
  // Center and radius of a horizontal disk that covers the primitive.
  std::pair<Eigen::Vector2d, double> operator()(const Box& b) const {
    return {b.pose.translation().head<2>(), 0.5 * b.size.head<2>().norm()};
  }
  std::pair<Eigen::Vector2d, double> operator()(const Cylinder& c) const {
    return {c.base_center.head<2>(), c.radius};
  }
  std::pair<Eigen::Vector2d, double> operator()(const Plane& p) const {
    return {p.pose.translation().head<2>(), 0.5 * std::max(p.width, p.length)};
  }
};

Eigen::Vector3d vec3(const toml::node_view<const toml::node>& node, const std::string& key) {
  const auto v = detail::toml_number_array(node, key);
  if (v.size() != 3) throw ConfigError("'" + key + "' needs 3 numbers");
  return {v[0], v[1], v[2]};
}

SE3 pose_from_toml(const toml::node_view<const toml::node>& obj, const std::string& ctx) {
  const Eigen::Vector3d center = vec3(obj["center"], ctx + ".center");
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  if (obj["rpy_deg"]) rpy = vec3(obj["rpy_deg"], ctx + ".rpy_deg");
  return SE3::from_rpy(deg2rad(rpy.x()), deg2rad(rpy.y()), deg2rad(rpy.z()), center);
}

void write_vec(std::ostream& os, const Eigen::Vector3d& v) {
  os << "[" << v.x() << ", " << v.y() << ", " << v.z() << "]";
}

Eigen::Vector3d rpy_deg(const SE3& pose) {
  // Z-Y-X decomposition matching SE3::from_rpy.
  const Eigen::Matrix3d& r = pose.rotation();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {rad2deg(roll), rad2deg(pitch), rad2deg(yaw)};
}

}  // namespace

void SyntheticWorld::validate() const {
  if (objects.empty()) throw ConfigError("synthetic world needs at least one object");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const bool ok = std::visit(
        [](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, Box>) return (o.size.array() > 0.0).all();
          if constexpr (std::is_same_v<T, Cylinder>) return o.radius > 0.0 && o.height > 0.0;
          if constexpr (std::is_same_v<T, Plane>) return o.width > 0.0 && o.length > 0.0;
        },
        objects[i]);
    if (!ok) throw ConfigError("object " + std::to_string(i) + " has non-positive dimensions");
  }
}

std::optional<double> intersect(const Primitive& prim, const Ray& ray) {
  return std::visit(
      [&](const auto& o) -> std::optional<double> {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Box>) return intersect_box(o, ray);
        if constexpr (std::is_same_v<T, Cylinder>) return intersect_cylinder(o, ray);
        if constexpr (std::is_same_v<T, Plane>) return intersect_plane(o, ray);
      },
      prim);
}

double surface_distance(const Primitive& prim, const Point3& p) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Box>) {
          const Eigen::Vector3d local = o.pose.inverse() * p;
          const Eigen::Vector3d q = local.cwiseAbs() - 0.5 * o.size;
          const double outside = q.cwiseMax(0.0).norm();
          const double inside = std::min(q.maxCoeff(), 0.0);
          return std::abs(outside + inside);
        } else if constexpr (std::is_same_v<T, Cylinder>) {
          const Eigen::Vector3d local = p - o.base_center;
          const double dr = local.head<2>().norm() - o.radius;
          const double dz = std::abs(local.z() - 0.5 * o.height) - 0.5 * o.height;
          const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
          const double inside = std::min(std::max(dr, dz), 0.0);
          return std::abs(outside + inside);
        } else {
          const Eigen::Vector3d local = o.pose.inverse() * p;
          const double dx = std::max(std::abs(local.x()) - 0.5 * o.width, 0.0);
          const double dy = std::max(std::abs(local.y()) - 0.5 * o.length, 0.0);
          return std::sqrt(dx * dx + dy * dy + local.z() * local.z());
        }
      },
      prim);
}

std::optional<WorldHit> cast_ray(const SyntheticWorld& world, const Ray& ray, double min_range, double max_range) {
  std::optional<WorldHit> best;
  auto consider = [&](double t, int label) {
    if (t < min_range || t > max_range) return;
    if (!best || t < best->range) best = WorldHit{t, label};
  };
  for (std::size_t i = 0; i < world.objects.size(); ++i) {
    if (auto t = intersect(world.objects[i], ray)) consider(*t, static_cast<int>(i));
  }
  if (world.ground_height && std::abs(ray.direction.z()) > 1e-15) {
    const double t = (*world.ground_height - ray.origin.z()) / ray.direction.z();
    if (t > kHitEpsilon) consider(t, kGroundLabel);
  }
  return best;
}

SimulatedScan simulate_scan(const SyntheticWorld& world, const SE3& pose, const LidarIntrinsics& intr,
                            double noise_sigma, std::uint64_t seed) {
  intr.validate();
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

  SimulatedScan out;
  for (std::size_t row = 0; row < intr.rows(); ++row) {
    const double elev = intr.beam_elevations[row];
    const double ce = std::cos(elev);
    const double se = std::sin(elev);
    for (int col = 0; col < intr.azimuth_columns; ++col) {
      const double az = intr.column_azimuth(col);
      const Eigen::Vector3d dir_sensor(ce * std::cos(az), ce * std::sin(az), se);
      const Ray ray{pose.translation(), pose.rotation() * dir_sensor};
      const auto hit = cast_ray(world, ray, intr.min_range, intr.max_range);
      if (!hit) continue;
      double range = hit->range;
      if (noise_sigma > 0.0) range += noise(rng);
      if (range <= 0.0) continue;
      out.scan.points.push_back(range * dir_sensor);
      out.labels.push_back(hit->label);
    }
  }
  return out;
}

SyntheticWorld generate_world(const WorldGenerationParams& params, std::uint64_t seed) {
  if (params.object_count == 0) throw ConfigError("object_count must be >= 1");
  if (!(params.min_lateral < params.max_lateral)) throw ConfigError("min_lateral must be < max_lateral");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticWorld world;
  world.ground_height = params.ground_height;
  const double g = params.ground_height;
  std::vector<std::pair<Eigen::Vector2d, double>> footprints;
  std::size_t attempts = 0;
  while (world.objects.size() < params.object_count) {
    if (++attempts > 200 * params.object_count) {
      throw ConfigError("could not place all objects; enlarge the area or reduce min_separation");
    }
    const double x = uniform(-params.margin, params.length + params.margin);
    const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double y = side * uniform(params.min_lateral, params.max_lateral);
    const double kind = unit(rng);
    Primitive prim;
    if (kind < params.plane_probability) {
      // Upright wall: local y becomes world z.
      const double width = uniform(2.0, 5.0);
      const double height = uniform(1.5, 3.5);
      const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
      const Eigen::Matrix3d r = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitX()))
                                    .toRotationMatrix();
      prim = Plane{SE3(r, Eigen::Vector3d(x, y, g + 0.5 * height)), width, height};
    } else if (kind < params.plane_probability + 0.5 * (1.0 - params.plane_probability)) {
      prim = Cylinder{Point3(x, y, g), uniform(0.15, 0.6), uniform(1.5, 5.0)};
    } else {
      const Eigen::Vector3d size(uniform(0.5, 3.0), uniform(0.5, 3.0), uniform(1.0, 4.0));
      const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
      prim = Box{SE3::from_yaw(yaw, Eigen::Vector3d(x, y, g + 0.5 * size.z())), size};
    }
    const auto fp = std::visit(FootprintVisitor{}, prim);
    const bool clear = std::all_of(footprints.begin(), footprints.end(), [&](const auto& other) {
      return (fp.first - other.first).norm() >= fp.second + other.second + params.min_separation;
    });
    if (!clear) continue;
    footprints.push_back(fp);
    world.objects.push_back(prim);
  }
  return world;
}

Trajectory straight_trajectory(std::size_t count, double x0, double spacing, double sensor_height,
                               std::uint32_t first_id) {
  Trajectory t;
  for (std::size_t i = 0; i < count; ++i) {
    t.push_back({first_id + static_cast<std::uint32_t>(i),
                 SE3::from_translation(Eigen::Vector3d(x0 + spacing * static_cast<double>(i), 0.0, sensor_height))});
  }
  return t;
}

std::string format_world(const SyntheticWorld& world) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (world.ground_height) os << "ground_height = " << *world.ground_height << "\n";
  for (const Primitive& prim : world.objects) {
    os << "\n[[object]]\n";
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, Box>) {
            os << "type = \"box\"\ncenter = ";
            write_vec(os, o.pose.translation());
            os << "\nrpy_deg = ";
            write_vec(os, rpy_deg(o.pose));
            os << "\nsize = ";
            write_vec(os, o.size);
            os << "\n";
          } else if constexpr (std::is_same_v<T, Cylinder>) {
            os << "type = \"cylinder\"\nbase = ";
            write_vec(os, o.base_center);
            os << "\nradius = " << o.radius << "\nheight = " << o.height << "\n";
          } else {
            os << "type = \"plane\"\ncenter = ";
            write_vec(os, o.pose.translation());
            os << "\nrpy_deg = ";
            write_vec(os, rpy_deg(o.pose));
            os << "\nwidth = " << o.width << "\nlength = " << o.length << "\n";
          }
        },
        prim);
  }
  return os.str();
}

SyntheticWorld parse_world(std::string_view toml_text, const std::string& source_name) {
  const toml::table tbl = detail::parse_toml(toml_text, source_name);
  SyntheticWorld world;
  world.ground_height = std::nullopt;
  if (tbl["ground_height"]) world.ground_height = detail::toml_number(tbl["ground_height"], "ground_height");
  const toml::array* objects = tbl["object"].as_array();
  if (objects == nullptr) throw ConfigError(source_name + ": no [[object]] entries");
  for (std::size_t i = 0; i < objects->size(); ++i) {
    const toml::node_view<const toml::node> obj{objects->get(i)};
    const std::string ctx = "object[" + std::to_string(i) + "]";
    const auto type = obj["type"].value<std::string>();
    if (!type) throw ConfigError(source_name + ": " + ctx + " has no type");
    if (*type == "box") {
      world.objects.push_back(Box{pose_from_toml(obj, ctx), vec3(obj["size"], ctx + ".size")});
    } else if (*type == "cylinder") {
      world.objects.push_back(Cylinder{vec3(obj["base"], ctx + ".base"),
                                       detail::toml_number(obj["radius"], ctx + ".radius"),
                                       detail::toml_number(obj["height"], ctx + ".height")});
    } else if (*type == "plane") {
      world.objects.push_back(Plane{pose_from_toml(obj, ctx), detail::toml_number(obj["width"], ctx + ".width"),
                                    detail::toml_number(obj["length"], ctx + ".length")});
    } else {
      throw ConfigError(source_name + ": " + ctx + " has unknown type '" + *type + "'");
    }
  }
  world.validate();
  return world;
}

SyntheticWorld load_world(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_world(text, path.string());
}

void save_world(const std::filesystem::path& path, const SyntheticWorld& world) {
  write_text_file(path, format_world(world));
}

}  // namespace oneshot
