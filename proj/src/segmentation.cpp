#include "oneshot/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>

#include "oneshot/error.hpp"

namespace oneshot {

void SegmentationConfig::validate() const {
  if (!(theta_seg > 0.0 && theta_seg < std::numbers::pi / 2)) throw ConfigError("theta_seg must lie in (0, pi/2)");
  if (!(tau_ground > 0.0 && tau_ground < std::numbers::pi / 2)) throw ConfigError("tau_ground must lie in (0, pi/2)");
  if (min_segment_points >= max_segment_points) throw ConfigError("min_segment_points must be < max_segment_points");
}

Point3 centroid_of(std::span<const Point3> points) {
  Point3 sum = Point3::Zero();
  for (const Point3& p : points) sum += p;
  return points.empty() ? sum : Point3(sum / static_cast<double>(points.size()));
}

void Segment::recompute_centroid() { centroid = centroid_of(points); }

Segment Segment::transformed(const SE3& T, Frame target) const {
  Segment out = *this;
  out.frame = target;
  for (Point3& p : out.points) p = T * p;
  out.centroid = T * centroid;
  return out;
}

RangeImage build_range_image(const Scan& scan, const LidarIntrinsics& intr) {
  intr.validate();
  RangeImage img;
  img.rows = static_cast<int>(intr.rows());
  img.cols = intr.azimuth_columns;
  const std::size_t n_cells = static_cast<std::size_t>(img.rows) * img.cols;
  img.range.assign(n_cells, 0.0);
  img.point_index.assign(n_cells, -1);
  img.cell_points.assign(n_cells, Point3::Zero());
  img.beam_elevations = intr.beam_elevations;
  img.azimuth_step = intr.azimuth_step();

  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Point3& p = scan.points[i];
    if (!p.allFinite()) {
      ++img.dropped;
      continue;
    }
    const auto c = spherical_project(intr, p);
    if (!c) {
      ++img.dropped;
      continue;
    }
    const std::size_t idx = img.cell(c->row, c->col);
    const double r = p.norm();
    if (img.range[idx] != 0.0 && img.range[idx] <= r) {
      ++img.dropped;
      continue;
    }
    if (img.range[idx] != 0.0) ++img.dropped;
    img.range[idx] = r;
    img.point_index[idx] = static_cast<std::int64_t>(i);
    img.cell_points[idx] = p;
  }
  return img;
}

std::vector<std::uint8_t> label_ground(const RangeImage& img, const SegmentationConfig& cfg) {
  std::vector<std::uint8_t> ground(img.range.size(), 0);
  const double tan_tau = std::tan(cfg.tau_ground);
  auto flat_enough = [&](const Eigen::Vector3d& d) {
    return std::abs(d.z()) <= tan_tau * d.head<2>().norm();
  };
  for (int c = 0; c < img.cols; ++c) {
    bool seeded = false;
    bool first = true;
    Point3 last_ground = Point3::Zero();
    for (int r = img.rows - 1; r >= 0; --r) {
      if (img.empty(r, c)) continue;
      const Point3& p = img.cell_points[img.cell(r, c)];
      bool is_ground = false;
      if (first) {
        first = false;
        is_ground = flat_enough(Eigen::Vector3d(p.x(), p.y(), p.z() + cfg.sensor_height));
        seeded = is_ground;
      } else if (seeded) {
        is_ground = flat_enough(p - last_ground);
      }
      if (is_ground) {
        ground[img.cell(r, c)] = 1;
        last_ground = p;
      }
    }
  }
  return ground;
}

double neighbor_angle(double ra, double rb, double alpha) {
  const double d1 = std::max(ra, rb);
  const double d2 = std::min(ra, rb);
  return std::atan2(d2 * std::sin(alpha), d1 - d2 * std::cos(alpha));
}

std::vector<Segment> segment(const RangeImage& img, std::span<const std::uint8_t> ground_mask,
                             const SegmentationConfig& cfg, std::uint32_t scan_id) {
  cfg.validate();
  if (ground_mask.size() != img.range.size()) throw DataError("ground mask does not match the range image");
  std::vector<std::uint8_t> visited(img.range.size(), 0);
  auto usable = [&](std::size_t idx) { return img.range[idx] != 0.0 && !ground_mask[idx] && !visited[idx]; };

  std::vector<Segment> segments;
  std::deque<std::pair<int, int>> queue;
  std::vector<std::size_t> component;
  for (int r0 = 0; r0 < img.rows; ++r0) {
    for (int c0 = 0; c0 < img.cols; ++c0) {
      const std::size_t start = img.cell(r0, c0);
      if (!usable(start)) continue;
      visited[start] = 1;
      component.clear();
      queue.emplace_back(r0, c0);
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        const std::size_t idx = img.cell(r, c);
        component.push_back(idx);
        const std::pair<int, int> neighbors[4] = {
            {r - 1, c}, {r + 1, c}, {r, (c + 1) % img.cols}, {r, (c + img.cols - 1) % img.cols}};
        for (const auto& [nr, nc] : neighbors) {
          if (nr < 0 || nr >= img.rows) continue;
          const std::size_t nidx = img.cell(nr, nc);
          if (!usable(nidx)) continue;
          const double alpha = nr != r ? std::abs(img.beam_elevations[static_cast<std::size_t>(r)] -
                                                  img.beam_elevations[static_cast<std::size_t>(nr)])
                                       : img.azimuth_step;
          if (neighbor_angle(img.range[idx], img.range[nidx], alpha) > cfg.theta_seg) {
            visited[nidx] = 1;
            queue.emplace_back(nr, nc);
          }
        }
      }
      if (component.size() < cfg.min_segment_points || component.size() > cfg.max_segment_points) continue;
      std::sort(component.begin(), component.end());
      Segment seg;
      seg.id = static_cast<std::uint32_t>(segments.size());
      seg.scan_id = scan_id;
      seg.frame = Frame::kSensor;
      seg.points.reserve(component.size());
      seg.point_indices.reserve(component.size());
      for (std::size_t idx : component) {
        seg.points.push_back(img.cell_points[idx]);
        seg.point_indices.push_back(img.point_index[idx]);
      }
      seg.recompute_centroid();
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

std::vector<Segment> segment_scan(const Scan& scan, const LidarIntrinsics& intr, const SegmentationConfig& cfg) {
  const RangeImage img = build_range_image(scan, intr);
  std::vector<std::uint8_t> ground =
      cfg.remove_ground ? label_ground(img, cfg) : std::vector<std::uint8_t>(img.range.size(), 0);
  return segment(img, ground, cfg, scan.id);
}

void write_segments_ply(const std::filesystem::path& path, std::span<const Segment> segments) {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.points.size();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << n
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty uint segment_id\nend_header\n";
  for (const auto& s : segments) {
    for (const Point3& p : s.points) {
      out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z()) << ' '
          << s.id << '\n';
    }
  }
  if (!out) throw DataError("write error on '" + path.string() + "'");
}

}  // namespace oneshot
