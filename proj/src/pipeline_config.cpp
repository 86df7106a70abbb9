#include <sstream>

#include "oneshot/binary_io.hpp"
#include "oneshot/calibration.hpp"
#include "oneshot/error.hpp"
#include "oneshot/pipeline.hpp"
#include "toml_util.hpp"

namespace oneshot {

using detail::toml_integer;
using detail::toml_number_or;

namespace {

using View = toml::node_view<const toml::node>;

void check_keys(View section, const std::string& name, std::initializer_list<std::string_view> known) {
  const toml::table* t = section.as_table();
  if (t == nullptr) return;
  for (const auto& [key, value] : *t) {
    bool ok = false;
    for (std::string_view k : known) ok = ok || key.str() == k;
    if (!ok) throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" + name + "]");
  }
}

double number_or(View node, const std::string& key, double fallback) {
  try {
    return toml_number_or(node, fallback);
  } catch (const ConfigError&) {
    throw ConfigError("key '" + key + "' must be a number");
  }
}

std::size_t count_or(View node, const std::string& key, std::size_t fallback) {
  if (!node) return fallback;
  const long long v = toml_integer(node, key);
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool bool_or(View node, const std::string& key, bool fallback) {
  if (!node) return fallback;
  if (auto v = node.value<bool>()) return *v;
  throw ConfigError("key '" + key + "' must be a boolean");
}

std::string string_or(View node, const std::string& key, const std::string& fallback) {
  if (!node) return fallback;
  if (auto v = node.value<std::string>()) return *v;
  throw ConfigError("key '" + key + "' must be a string");
}

std::filesystem::path existing_path(View node, const std::string& key, const std::filesystem::path& base_dir) {
  std::filesystem::path p = string_or(node, key, "");
  if (p.empty()) return p;
  if (p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) throw ConfigError(key + ": '" + p.string() + "' does not exist");
  return p;
}

Calibration calibration_from(View node, const std::filesystem::path& base_dir, const std::string& key,
                             const std::string& source_name) {
  if (auto path = node.value<std::string>()) {
    return load_calibration(existing_path(node, key, base_dir));
  }
  if (const toml::table* t = node.as_table()) {
    std::ostringstream os;
    os << *t;
    return parse_calibration(os.str(), source_name + " [" + key + "]");
  }
  throw ConfigError("key '" + key + "' must be a path or a table");
}

toml::array to_array(const std::vector<double>& values) {
  toml::array a;
  for (double v : values) a.push_back(v);
  return a;
}

toml::table lidar_table(const LidarIntrinsics& l) {
  std::vector<double> deg;
  for (double e : l.beam_elevations) deg.push_back(rad2deg(e));
  return toml::table{{"beam_elevations", to_array(deg)},
                     {"azimuth_columns", l.azimuth_columns},
                     {"min_range", l.min_range},
                     {"max_range", l.max_range}};
}

}  // namespace

void PipelineConfig::validate() const {
  lidar.validate();
  if (camera) camera->validate();
  if (source_lidar) source_lidar->validate();
  segmentation.validate();
  if (descriptor.backend != "handcrafted" && descriptor.backend != "embedding-file") {
    throw ConfigError("unknown descriptor backend '" + descriptor.backend + "'");
  }
  if (descriptor.backend == "embedding-file" && descriptor.embedding_files.empty()) {
    throw ConfigError("descriptor backend 'embedding-file' needs at least one embeddings file");
  }
  if (k < 1) throw ConfigError("matching.k must be >= 1");
  if (!(verification.epsilon > 0.0)) throw ConfigError("verification.epsilon must be positive");
  if (verification.min_clique_size < 3) throw ConfigError("verification.min_clique_size must be >= 3");
  if (verification.node_budget < 1) throw ConfigError("verification.node_budget must be >= 1");
  if (!(icp.tol > 0.0)) throw ConfigError("icp.tol must be positive");
  if (!(icp.max_correspondence_distance > 0.0)) throw ConfigError("icp.max_correspondence_distance must be positive");
  if (!(map.dedup_radius > 0.0)) throw ConfigError("map.dedup_radius must be positive");
  if (!(map.dedup_percentile >= 0.0 && map.dedup_percentile <= 100.0)) {
    throw ConfigError("map.dedup_percentile must be in [0, 100]");
  }
  if (!(evaluation.success_radius > 0.0)) throw ConfigError("evaluation.success_radius must be positive");
  if (!(evaluation.iou_threshold >= 0.0 && evaluation.iou_threshold <= 1.0)) {
    throw ConfigError("evaluation.iou_threshold must be in [0, 1]");
  }
  if (!(evaluation.iou_voxel_size > 0.0)) throw ConfigError("evaluation.iou_voxel_size must be positive");
  if (!(evaluation.icp_map_radius > 0.0)) throw ConfigError("evaluation.icp_map_radius must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

PipelineConfig parse_pipeline_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                     const std::string& source_name) {
  const toml::table tbl = detail::parse_toml(toml_text, source_name);
  const View root{tbl};
  check_keys(root, "root",
             {"seed", "threads", "calibration", "source_calibration", "lidar", "camera", "source_lidar",
              "segmentation", "descriptor", "matching", "verification", "icp", "map", "evaluation", "dataset"});
  PipelineConfig cfg;

  if (root["seed"]) {
    const long long s = toml_integer(root["seed"], "seed");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  cfg.threads = count_or(root["threads"], "threads", cfg.threads);

  if (root["calibration"] && (root["lidar"] || root["camera"])) {
    throw ConfigError("give either 'calibration' or inline [lidar]/[camera], not both");
  }
  if (root["calibration"]) {
    const Calibration c = calibration_from(root["calibration"], base_dir, "calibration", source_name);
    cfg.lidar = c.lidar;
    cfg.camera = c.camera;
  } else if (root["lidar"]) {
    toml::table sub;
    sub.insert("lidar", *root["lidar"].as_table());
    if (const toml::table* cam = root["camera"].as_table()) sub.insert("camera", *cam);
    const Calibration c = calibration_from(View{sub}, base_dir, "lidar", source_name);
    cfg.lidar = c.lidar;
    cfg.camera = c.camera;
  }
  if (root["source_calibration"]) {
    cfg.source_lidar = calibration_from(root["source_calibration"], base_dir, "source_calibration", source_name).lidar;
  } else if (const toml::table* src = root["source_lidar"].as_table()) {
    toml::table sub;
    sub.insert("lidar", *src);
    cfg.source_lidar = calibration_from(View{sub}, base_dir, "source_lidar", source_name).lidar;
  }

  const View seg = root["segmentation"];
  check_keys(seg, "segmentation",
             {"theta_seg_deg", "tau_ground_deg", "sensor_height", "min_segment_points", "max_segment_points",
              "remove_ground"});
  auto& s = cfg.segmentation;
  s.theta_seg = deg2rad(number_or(seg["theta_seg_deg"], "segmentation.theta_seg_deg", rad2deg(s.theta_seg)));
  s.tau_ground = deg2rad(number_or(seg["tau_ground_deg"], "segmentation.tau_ground_deg", rad2deg(s.tau_ground)));
  s.sensor_height = number_or(seg["sensor_height"], "segmentation.sensor_height", s.sensor_height);
  s.min_segment_points = count_or(seg["min_segment_points"], "segmentation.min_segment_points", s.min_segment_points);
  s.max_segment_points = count_or(seg["max_segment_points"], "segmentation.max_segment_points", s.max_segment_points);
  s.remove_ground = bool_or(seg["remove_ground"], "segmentation.remove_ground", s.remove_ground);

  const View desc = root["descriptor"];
  check_keys(desc, "descriptor", {"backend", "embeddings"});
  cfg.descriptor.backend = string_or(desc["backend"], "descriptor.backend", cfg.descriptor.backend);
  if (desc["embeddings"]) {
    const toml::array* arr = desc["embeddings"].as_array();
    if (arr == nullptr) throw ConfigError("descriptor.embeddings must be a list of paths");
    for (const toml::node& n : *arr) {
      cfg.descriptor.embedding_files.push_back(existing_path(View{n}, "descriptor.embeddings", base_dir));
    }
  }

  const View match = root["matching"];
  check_keys(match, "matching", {"k"});
  cfg.k = count_or(match["k"], "matching.k", cfg.k);

  const View ver = root["verification"];
  check_keys(ver, "verification", {"epsilon", "min_clique_size", "node_budget"});
  cfg.verification.epsilon = number_or(ver["epsilon"], "verification.epsilon", cfg.verification.epsilon);
  cfg.verification.min_clique_size =
      count_or(ver["min_clique_size"], "verification.min_clique_size", cfg.verification.min_clique_size);
  cfg.verification.node_budget = count_or(ver["node_budget"], "verification.node_budget", cfg.verification.node_budget);

  const View icp = root["icp"];
  check_keys(icp, "icp", {"max_iter", "tol", "max_correspondence_distance"});
  cfg.icp.max_iter = count_or(icp["max_iter"], "icp.max_iter", cfg.icp.max_iter);
  cfg.icp.tol = number_or(icp["tol"], "icp.tol", cfg.icp.tol);
  cfg.icp.max_correspondence_distance =
      number_or(icp["max_correspondence_distance"], "icp.max_correspondence_distance", cfg.icp.max_correspondence_distance);

  const View mp = root["map"];
  check_keys(mp, "map", {"dedup", "dedup_radius", "dedup_percentile", "include_points"});
  cfg.map.dedup = bool_or(mp["dedup"], "map.dedup", cfg.map.dedup);
  cfg.map.dedup_radius = number_or(mp["dedup_radius"], "map.dedup_radius", cfg.map.dedup_radius);
  cfg.map.dedup_percentile = number_or(mp["dedup_percentile"], "map.dedup_percentile", cfg.map.dedup_percentile);
  cfg.map.include_points = bool_or(mp["include_points"], "map.include_points", cfg.map.include_points);

  const View ev = root["evaluation"];
  check_keys(ev, "evaluation", {"success_radius", "iou_threshold", "iou_voxel_size", "icp_map_radius"});
  auto& e = cfg.evaluation;
  e.success_radius = number_or(ev["success_radius"], "evaluation.success_radius", e.success_radius);
  e.iou_threshold = number_or(ev["iou_threshold"], "evaluation.iou_threshold", e.iou_threshold);
  e.iou_voxel_size = number_or(ev["iou_voxel_size"], "evaluation.iou_voxel_size", e.iou_voxel_size);
  e.icp_map_radius = number_or(ev["icp_map_radius"], "evaluation.icp_map_radius", e.icp_map_radius);

  const View ds = root["dataset"];
  check_keys(ds, "dataset", {"scans", "poses", "times", "kitti_calib", "time_begin", "time_end"});
  cfg.dataset.scans = existing_path(ds["scans"], "dataset.scans", base_dir);
  cfg.dataset.poses = existing_path(ds["poses"], "dataset.poses", base_dir);
  cfg.dataset.times = existing_path(ds["times"], "dataset.times", base_dir);
  cfg.dataset.kitti_calib = existing_path(ds["kitti_calib"], "dataset.kitti_calib", base_dir);
  if (ds["time_begin"]) cfg.dataset.time_begin = number_or(ds["time_begin"], "dataset.time_begin", 0.0);
  if (ds["time_end"]) cfg.dataset.time_end = number_or(ds["time_end"], "dataset.time_end", 0.0);

  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_pipeline_config(text, path.parent_path(), path.string());
}

std::string format_pipeline_config(const PipelineConfig& cfg) {
  toml::table t;
  t.insert("seed", static_cast<std::int64_t>(cfg.seed));
  t.insert("threads", static_cast<std::int64_t>(cfg.threads));
  t.insert("lidar", lidar_table(cfg.lidar));
  if (cfg.camera) {
    const PinholeCamera& c = *cfg.camera;
    const Eigen::Matrix4d m = c.T_cam_lidar.matrix();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) flat.push_back(m(r, k));
    t.insert("camera", toml::table{{"fx", c.fx},
                                   {"fy", c.fy},
                                   {"cx", c.cx},
                                   {"cy", c.cy},
                                   {"width", c.width},
                                   {"height", c.height},
                                   {"T_cam_lidar", to_array(flat)}});
  }
  if (cfg.source_lidar) t.insert("source_lidar", lidar_table(*cfg.source_lidar));
  const auto& s = cfg.segmentation;
  t.insert("segmentation", toml::table{{"theta_seg_deg", rad2deg(s.theta_seg)},
                                       {"tau_ground_deg", rad2deg(s.tau_ground)},
                                       {"sensor_height", s.sensor_height},
                                       {"min_segment_points", static_cast<std::int64_t>(s.min_segment_points)},
                                       {"max_segment_points", static_cast<std::int64_t>(s.max_segment_points)},
                                       {"remove_ground", s.remove_ground}});
  toml::array emb;
  for (const auto& p : cfg.descriptor.embedding_files) emb.push_back(p.string());
  t.insert("descriptor", toml::table{{"backend", cfg.descriptor.backend}, {"embeddings", emb}});
  t.insert("matching", toml::table{{"k", static_cast<std::int64_t>(cfg.k)}});
  t.insert("verification",
           toml::table{{"epsilon", cfg.verification.epsilon},
                       {"min_clique_size", static_cast<std::int64_t>(cfg.verification.min_clique_size)},
                       {"node_budget", static_cast<std::int64_t>(cfg.verification.node_budget)}});
  t.insert("icp", toml::table{{"max_iter", static_cast<std::int64_t>(cfg.icp.max_iter)},
                              {"tol", cfg.icp.tol},
                              {"max_correspondence_distance", cfg.icp.max_correspondence_distance}});
  t.insert("map", toml::table{{"dedup", cfg.map.dedup},
                              {"dedup_radius", cfg.map.dedup_radius},
                              {"dedup_percentile", cfg.map.dedup_percentile},
                              {"include_points", cfg.map.include_points}});
  const auto& e = cfg.evaluation;
  t.insert("evaluation", toml::table{{"success_radius", e.success_radius},
                                     {"iou_threshold", e.iou_threshold},
                                     {"iou_voxel_size", e.iou_voxel_size},
                                     {"icp_map_radius", e.icp_map_radius}});
  toml::table ds;
  if (!cfg.dataset.scans.empty()) ds.insert("scans", cfg.dataset.scans.string());
  if (!cfg.dataset.poses.empty()) ds.insert("poses", cfg.dataset.poses.string());
  if (!cfg.dataset.times.empty()) ds.insert("times", cfg.dataset.times.string());
  if (!cfg.dataset.kitti_calib.empty()) ds.insert("kitti_calib", cfg.dataset.kitti_calib.string());
  if (cfg.dataset.time_begin) ds.insert("time_begin", *cfg.dataset.time_begin);
  if (cfg.dataset.time_end) ds.insert("time_end", *cfg.dataset.time_end);
  if (!ds.empty()) t.insert("dataset", std::move(ds));

  std::ostringstream os;
  os << t << "\n";
  return os.str();
}

}  // namespace oneshot
