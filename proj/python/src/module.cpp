#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oneshot/dataset.hpp"
#include "oneshot/error.hpp"
#include "oneshot/evaluation.hpp"
#include "oneshot/pipeline.hpp"
#include "oneshot/synthetic.hpp"

namespace py = pybind11;
using namespace oneshot;

namespace {

using PointArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Points3 to_points(const PointArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (N, 3) array of points");
  Points3 out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = Point3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> from_points(const Points3& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = pts[i][k];
  return a;
}

Scan make_scan(const PointArray& points, std::uint32_t scan_id) {
  Scan s;
  s.id = scan_id;
  s.points = to_points(points);
  return s;
}

SE3 to_se3(const Eigen::Matrix4d& m) { return SE3::from_matrix(m); }

py::dict result_dict(const LocalizationResult& r) {
  py::dict d;
  d["scan_id"] = r.scan_id;
  d["accepted"] = r.pose.accepted;
  d["T_map_query"] = r.pose.T_map_query.matrix();
  d["clique_size"] = r.pose.inliers.size();
  d["rms_residual"] = r.pose.rms_residual;
  d["segment_count"] = r.segment_count;
  d["candidate_count"] = r.candidate_count;
  d["rejected_stage"] = r.rejected_stage;
  d["reason"] = r.pose.reason;
  py::dict t;
  t["segmentation"] = r.timings.segmentation_ms;
  t["description"] = r.timings.description_ms;
  t["matching"] = r.timings.matching_ms;
  t["verification"] = r.timings.verification_ms;
  t["total"] = r.timings.total_ms;
  d["timings_ms"] = t;
  return d;
}

std::vector<Scan> scans_from(const std::vector<std::pair<std::uint32_t, PointArray>>& items) {
  std::vector<Scan> scans;
  for (const auto& [id, pts] : items) scans.push_back(make_scan(pts, id));
  return scans;
}

Trajectory trajectory_from(const std::map<std::uint32_t, Eigen::Matrix4d>& poses) {
  Trajectory t;
  for (const auto& [id, m] : poses) t.push_back({id, to_se3(m)});
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single-scan LiDAR global localization";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", data.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("k", &PipelineConfig::k)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("threads", &PipelineConfig::threads)
      .def_property(
          "epsilon", [](const PipelineConfig& c) { return c.verification.epsilon; },
          [](PipelineConfig& c, double v) { c.verification.epsilon = v; })
      .def_property(
          "min_clique_size", [](const PipelineConfig& c) { return c.verification.min_clique_size; },
          [](PipelineConfig& c, std::size_t v) { c.verification.min_clique_size = v; })
      .def_property(
          "sensor_height", [](const PipelineConfig& c) { return c.segmentation.sensor_height; },
          [](PipelineConfig& c, double v) { c.segmentation.sensor_height = v; })
      .def_property(
          "dedup", [](const PipelineConfig& c) { return c.map.dedup; },
          [](PipelineConfig& c, bool v) { c.map.dedup = v; })
      .def("validate", &PipelineConfig::validate)
      .def("to_toml", &format_pipeline_config);

  m.def("load_config", &load_pipeline_config, py::arg("path"));
  m.def(
      "parse_config",
      [](const std::string& text, const std::filesystem::path& base_dir) {
        return parse_pipeline_config(text, base_dir);
      },
      py::arg("text"), py::arg("base_dir") = std::filesystem::path("."));

  m.def(
      "read_scan", [](const std::filesystem::path& p) { return from_points(read_kitti_scan(p).points); },
      py::arg("path"), "Points of a KITTI .bin scan as an (N, 3) array.");
  m.def(
      "write_scan", [](const std::filesystem::path& p, const PointArray& pts) { write_kitti_scan(p, make_scan(pts, 0)); },
      py::arg("path"), py::arg("points"));

  m.def(
      "segment_scan",
      [](const PointArray& pts, const PipelineConfig& cfg) {
        py::list out;
        for (const Segment& s : segment_scan(make_scan(pts, 0), cfg.lidar, cfg.segmentation)) {
          py::dict d;
          d["id"] = s.id;
          d["points"] = from_points(s.points);
          d["centroid"] = Eigen::Vector3d(s.centroid);
          d["point_indices"] = s.point_indices;
          out.append(d);
        }
        return out;
      },
      py::arg("points"), py::arg("config") = PipelineConfig{});

  m.def(
      "describe",
      [](const PointArray& pts) {
        Segment s;
        s.points = to_points(pts);
        s.recompute_centroid();
        return describe_handcrafted(s).values;
      },
      py::arg("points"), "Hand-crafted descriptor of one segment.");

  m.def(
      "voxelize",
      [](const PointArray& pts) {
        Segment s;
        s.points = to_points(pts);
        s.recompute_centroid();
        const VoxelGrid g = voxelize(s);
        py::array_t<std::uint8_t> occ({kVoxelZ, kVoxelY, kVoxelX});
        std::copy(g.occupancy.begin(), g.occupancy.end(), occ.mutable_data());
        return py::make_tuple(occ, g.voxel_size);
      },
      py::arg("points"), "Occupancy grid indexed [z, y, x] and its voxel size.");

  py::class_<SegmentMap, std::shared_ptr<SegmentMap>>(m, "SegmentMap")
      .def_property_readonly("size", &SegmentMap::size)
      .def_property_readonly("dim", &SegmentMap::dim)
      .def_property_readonly("has_points", &SegmentMap::has_points)
      .def_property_readonly("backend", [](const SegmentMap& map) { return map.metadata().backend_id; })
      .def("centroids",
           [](const SegmentMap& map) {
             Points3 c;
             for (const auto& s : map.segments()) c.push_back(s.segment.centroid);
             return from_points(c);
           })
      .def("save", [](const SegmentMap& map, const std::filesystem::path& p,
                      bool include_points) { save_map(map, p, include_points); },
           py::arg("path"), py::arg("include_points") = true);

  m.def(
      "load_map", [](const std::filesystem::path& p) { return std::make_shared<SegmentMap>(load_map(p)); },
      py::arg("path"));
  m.def(
      "build_map",
      [](const std::vector<std::pair<std::uint32_t, PointArray>>& scans,
         const std::map<std::uint32_t, Eigen::Matrix4d>& poses, const PipelineConfig& cfg) {
        return std::make_shared<SegmentMap>(build_map_from_trajectory(scans_from(scans), trajectory_from(poses), cfg));
      },
      py::arg("scans"), py::arg("poses"), py::arg("config") = PipelineConfig{},
      "Map from [(scan_id, points)] and {scan_id: 4x4 world pose}.");

  py::class_<Localizer>(m, "Localizer")
      .def(py::init([](std::shared_ptr<SegmentMap> map, const PipelineConfig& cfg) {
             return Localizer(map, make_descriptor_backend(cfg.descriptor), cfg);
           }),
           py::arg("map"), py::arg("config") = PipelineConfig{})
      .def(
          "localize",
          [](const Localizer& loc, const PointArray& pts, std::uint32_t scan_id) {
            const Scan s = make_scan(pts, scan_id);
            LocalizationResult r;
            {
              py::gil_scoped_release release;
              r = loc.localize(s);
            }
            return result_dict(r);
          },
          py::arg("points"), py::arg("scan_id") = 0);

  m.def(
      "max_clique",
      [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& adj) {
        if (adj.ndim() != 2 || adj.shape(0) != adj.shape(1)) throw py::value_error("expected a square matrix");
        const auto n = static_cast<std::size_t>(adj.shape(0));
        ConsistencyGraph g(n, 1.0);
        auto a = adj.unchecked<2>();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            if (a(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j))) g.add_edge(i, j);
        return max_clique(g).vertices;
      },
      py::arg("adjacency"), "Lexicographically smallest maximum clique of a symmetric adjacency matrix.");

  m.def(
      "align_points",
      [](const PointArray& q, const PointArray& mp) {
        const Alignment a = align_points(to_points(q), to_points(mp));
        return py::make_tuple(a.transform.matrix(), a.rms_residual);
      },
      py::arg("query"), py::arg("map"), "Least-squares rigid transform taking query points onto map points.");

  m.def(
      "generate_world",
      [](std::uint64_t seed, std::size_t objects) {
        WorldGenerationParams p;
        p.object_count = objects;
        return format_world(generate_world(p, seed));
      },
      py::arg("seed"), py::arg("objects") = 30, "Random world as TOML text.");
  m.def(
      "simulate_scan",
      [](const std::string& world_toml, const Eigen::Matrix4d& pose, double noise, std::uint64_t seed,
         const PipelineConfig& cfg) {
        const SimulatedScan s = simulate_scan(parse_world(world_toml), to_se3(pose), cfg.lidar, noise, seed);
        return py::make_tuple(from_points(s.scan.points), s.labels);
      },
      py::arg("world"), py::arg("pose"), py::arg("noise") = 0.0, py::arg("seed") = 0,
      py::arg("config") = PipelineConfig{}, "Points and per-point object labels (-1 = ground).");

  m.def(
      "wakeup_distances",
      [](const std::vector<std::uint8_t>& success, const std::vector<double>& arc) {
        return wakeup_distances(success, arc);
      },
      py::arg("success"), py::arg("arc_length"));
  m.def(
      "pr_sweep",
      [](const std::vector<double>& dist, const std::vector<bool>& positive) {
        if (dist.size() != positive.size()) throw py::value_error("distances and labels differ in length");
        std::vector<LabeledDistance> pairs;
        for (std::size_t i = 0; i < dist.size(); ++i) pairs.push_back({dist[i], positive[i]});
        const RetrievalReport r = pr_sweep(pairs);
        py::list curve;
        for (const PRPoint& p : r.curve) curve.append(py::make_tuple(p.threshold, p.precision, p.recall));
        return py::make_tuple(curve, r.auc);
      },
      py::arg("distances"), py::arg("positive"), "([(threshold, precision, recall)], auc).");

  m.def(
      "load_embeddings",
      [](const std::filesystem::path& p) {
        const EmbeddingTable t = load_embeddings(p);
        py::array_t<std::uint32_t> keys({static_cast<py::ssize_t>(t.size()), py::ssize_t{2}});
        py::array_t<float> values({static_cast<py::ssize_t>(t.size()), static_cast<py::ssize_t>(t.dim())});
        auto k = keys.mutable_unchecked<2>();
        auto v = values.mutable_unchecked<2>();
        py::ssize_t i = 0;
        for (const auto& [key, d] : t.records()) {
          k(i, 0) = key.first;
          k(i, 1) = key.second;
          for (std::size_t j = 0; j < d.dim(); ++j) v(i, static_cast<py::ssize_t>(j)) = d.values[j];
          ++i;
        }
        return py::make_tuple(keys, values);
      },
      py::arg("path"), "(keys[N, 2] of (scan_id, segment_id), values[N, dim]).");
  m.def(
      "save_embeddings",
      [](const std::filesystem::path& p, const py::array_t<std::uint32_t, py::array::forcecast>& keys,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& values) {
        if (keys.ndim() != 2 || keys.shape(1) != 2 || values.ndim() != 2 || values.shape(0) != keys.shape(0)) {
          throw py::value_error("expected keys[N, 2] and values[N, dim]");
        }
        EmbeddingTable t(static_cast<std::size_t>(values.shape(1)));
        auto k = keys.unchecked<2>();
        auto v = values.unchecked<2>();
        for (py::ssize_t i = 0; i < keys.shape(0); ++i) {
          Descriptor d;
          for (py::ssize_t j = 0; j < values.shape(1); ++j) d.values.push_back(v(i, j));
          t.insert({k(i, 0), k(i, 1)}, std::move(d));
        }
        save_embeddings(p, t);
      },
      py::arg("path"), py::arg("keys"), py::arg("values"));
}
