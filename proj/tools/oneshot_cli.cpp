// oneshot: batch command line front end for map building, localization,
// evaluation, training-data export and synthetic data generation.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "oneshot/binary_io.hpp"
#include "oneshot/calibration.hpp"
#include "oneshot/dataset.hpp"
#include "oneshot/error.hpp"
#include "oneshot/evaluation.hpp"
#include "oneshot/image.hpp"
#include "oneshot/pipeline.hpp"
#include "oneshot/synthetic.hpp"

namespace fs = std::filesystem;
using namespace oneshot;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output = ".";
  bool output_set = false;
};

struct DataOptions {
  std::string scans;
  std::string poses;
  std::string times;
  std::string kitti_calib;
  std::optional<double> time_begin;
  std::optional<double> time_end;
};

void add_data_options(CLI::App* app, DataOptions& d, bool with_poses = true) {
  app->add_option("--scans", d.scans, "Directory of KITTI .bin scans");
  if (with_poses) {
    app->add_option("--poses", d.poses, "KITTI poses file (one line per scan id)");
    app->add_option("--kitti-calib", d.kitti_calib, "KITTI calib.txt; converts camera poses to LiDAR poses");
  }
  app->add_option("--times", d.times, "KITTI times.txt, needed for the time window");
  app->add_option("--time-begin", d.time_begin, "Keep scans with timestamp >= this (s)");
  app->add_option("--time-end", d.time_end, "Keep scans with timestamp <= this (s)");
}

PipelineConfig load_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

// Command line values win over the config's [dataset] section.
DataOptions merge(DataOptions d, const DatasetConfig& ds) {
  if (d.scans.empty()) d.scans = ds.scans.string();
  if (d.poses.empty()) d.poses = ds.poses.string();
  if (d.times.empty()) d.times = ds.times.string();
  if (d.kitti_calib.empty()) d.kitti_calib = ds.kitti_calib.string();
  if (!d.time_begin) d.time_begin = ds.time_begin;
  if (!d.time_end) d.time_end = ds.time_end;
  return d;
}

std::vector<Scan> load_scans(const DataOptions& d) {
  if (d.scans.empty()) throw ConfigError("no scan directory given (--scans or dataset.scans)");
  std::vector<double> times;
  if (!d.times.empty()) {
    times = read_kitti_times(d.times);
  } else if (d.time_begin || d.time_end) {
    throw ConfigError("a time window needs a times file (--times or dataset.times)");
  }
  std::vector<Scan> scans;
  for (const auto& [id, path] : list_kitti_scans(d.scans)) {
    double t = 0.0;
    if (!times.empty()) {
      if (id >= times.size()) throw DataError("no timestamp for scan id " + std::to_string(id));
      t = times[id];
      if ((d.time_begin && t < *d.time_begin) || (d.time_end && t > *d.time_end)) continue;
    }
    Scan s = read_kitti_scan(path, id);
    s.timestamp = t;
    if (s.warning) std::cerr << "warning: " << path.string() << ": " << *s.warning << "\n";
    scans.push_back(std::move(s));
  }
  if (scans.empty()) throw DataError("no scans selected from '" + d.scans + "'");
  return scans;
}

Trajectory load_trajectory(const DataOptions& d) {
  if (d.poses.empty()) throw ConfigError("no poses file given (--poses or dataset.poses)");
  const SE3 T_cam_lidar = d.kitti_calib.empty() ? SE3::identity() : read_kitti_velo_to_cam(d.kitti_calib);
  return read_kitti_poses(d.poses, T_cam_lidar);
}

fs::path output_dir(const Globals& g) {
  const fs::path dir(g.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::string scan_name(std::uint32_t id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id;
  return os.str();
}

std::string segment_name(std::uint32_t scan_id, std::uint32_t seg_id) {
  return "scan" + std::to_string(scan_id) + "_seg" + std::to_string(seg_id);
}

// ---------------------------------------------------------------------------

struct BuildMapOptions {
  DataOptions data;
  bool no_points = false;
  std::string name = "map.oslm";
};

void run_build_map(const Globals& g, const BuildMapOptions& o) {
  PipelineConfig cfg = load_config(g);
  if (o.no_points) cfg.map.include_points = false;
  const DataOptions d = merge(o.data, cfg.dataset);
  const std::vector<Scan> scans = load_scans(d);
  const Trajectory traj = load_trajectory(d);
  const SegmentMap map = build_map_from_trajectory(scans, traj, cfg);
  const fs::path out = output_dir(g) / o.name;
  save_map(map, out, cfg.map.include_points);
  std::cerr << "map: " << map.size() << " segments from " << scans.size() << " scans -> " << out.string() << "\n";
}

struct LocalizeOptions {
  DataOptions data;
  std::string map;
  std::optional<std::size_t> threads;
};

void run_localize(const Globals& g, const LocalizeOptions& o) {
  PipelineConfig cfg = load_config(g);
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  const DataOptions d = merge(o.data, cfg.dataset);
  auto map = std::make_shared<const SegmentMap>(load_map(o.map));
  std::shared_ptr<const DescriptorBackend> backend = make_descriptor_backend(cfg.descriptor);
  const Localizer localizer(map, backend, cfg);
  const std::vector<Scan> scans = load_scans(d);
  const auto results = localizer.localize_all(scans);

  std::ofstream file;
  if (g.output_set) {
    const fs::path path = output_dir(g) / "results.jsonl";
    file.open(path);
    if (!file) throw DataError("cannot write '" + path.string() + "'");
  }
  std::size_t accepted = 0;
  for (const auto& r : results) {
    const std::string line = result_to_json_line(r);
    std::cout << line << "\n";
    if (file.is_open()) file << line << "\n";
    accepted += r.pose.accepted ? 1 : 0;
  }
  std::cerr << "localized " << accepted << " of " << results.size() << " scans\n";
}

struct WakeupOptions {
  DataOptions data;
  std::string results;
  std::string map;
  std::optional<double> success_radius;
};

void run_evaluate_wakeup(const Globals& g, const WakeupOptions& o) {
  const PipelineConfig cfg = load_config(g);
  const DataOptions d = merge(o.data, cfg.dataset);
  const double radius = o.success_radius.value_or(cfg.evaluation.success_radius);
  const auto results = read_results_jsonl(o.results);
  const Trajectory traj = load_trajectory(d);

  Summary summary;
  summary.wakeup = evaluate_wakeup(results, traj, radius);
  summary.localization = evaluate_localization(results, traj, radius);
  const fs::path out = output_dir(g);
  if (!o.map.empty()) {
    const SegmentMap map = load_map(o.map);
    std::vector<Scan> scans = load_scans(d);
    add_icp_errors(*summary.localization, results, scans, map, cfg);
    write_loc_errors_csv(out / "loc_errors.csv", summary.localization->icp_corrections);
  }
  if (summary.localization->accepted == 0) {
    std::cerr << "note: no accepted localizations; precision reported as 1\n";
  }
  write_wakeup_csv(out / "wakeup_cdf.csv", summary.wakeup->cdf);
  write_text_file(out / "summary.json", summary_json(summary));
  std::cerr << "recall " << summary.localization->recall << ", precision " << summary.localization->precision
            << ", CDF(2.5 m) " << cdf_at(summary.wakeup->distances(), 2.5) << "\n";
}

struct RetrievalOptions {
  DataOptions data;
  std::vector<std::string> embeddings;
  std::string labels;
};

// Segments of every scan, each scan's ids kept so they match exported files.
std::vector<Segment> segment_all(std::span<const Scan> scans, const PipelineConfig& cfg) {
  std::vector<Segment> all;
  for (const Scan& raw : scans) {
    for (Segment& s : segment_scan(prepare_scan(raw, cfg), cfg.lidar, cfg.segmentation)) all.push_back(std::move(s));
  }
  return all;
}

// Labels between segments of distinct scans whose bounding boxes overlap.
std::vector<CorrespondenceLabel> cross_scan_labels(std::span<const Segment> segments, const Trajectory& traj,
                                                   const PipelineConfig& cfg) {
  std::vector<CorrespondenceLabel> out;
  for (const auto& l : label_correspondences(segments, segments, traj, cfg.evaluation.iou_threshold,
                                             cfg.evaluation.iou_voxel_size)) {
    if (l.scan_a < l.scan_b && l.overlap_iou > 0.0) out.push_back(l);
  }
  return out;
}

void run_evaluate_retrieval(const Globals& g, const RetrievalOptions& o) {
  const PipelineConfig cfg = load_config(g);
  const DataOptions d = merge(o.data, cfg.dataset);
  EmbeddingTable table;
  std::vector<CorrespondenceLabel> labels;
  if (!o.labels.empty()) labels = read_labels_csv(o.labels);

  if (!o.embeddings.empty()) {
    std::vector<fs::path> paths(o.embeddings.begin(), o.embeddings.end());
    table = load_embeddings(paths);
  }
  if (table.empty() || labels.empty()) {
    const std::vector<Scan> scans = load_scans(d);
    const std::vector<Segment> segments = segment_all(scans, cfg);
    if (labels.empty()) labels = cross_scan_labels(segments, load_trajectory(d), cfg);
    if (table.empty()) {
      const auto backend = make_descriptor_backend(cfg.descriptor);
      table = EmbeddingTable(backend->dim());
      for (const Segment& s : segments) table.insert({s.scan_id, s.id}, backend->describe(s));
    }
  }
  Summary summary;
  summary.retrieval = evaluate_retrieval(table, labels);
  const fs::path out = output_dir(g);
  write_pr_csv(out / "pr_curve.csv", summary.retrieval->curve);
  write_text_file(out / "summary.json", summary_json(summary));
  std::cerr << "AUC " << summary.retrieval->auc << " over " << summary.retrieval->positives << " positive and "
            << summary.retrieval->negatives << " negative pairs\n";
}

struct ExportOptions {
  DataOptions data;
  std::string images;
  double margin = 0.1;
};

void run_export_training(const Globals& g, const ExportOptions& o) {
  const PipelineConfig cfg = load_config(g);
  const DataOptions d = merge(o.data, cfg.dataset);
  if (!o.images.empty() && !cfg.camera) throw ConfigError("--images needs a [camera] calibration in the config");
  const std::vector<Scan> scans = load_scans(d);
  const Trajectory traj = load_trajectory(d);
  const std::vector<Segment> segments = segment_all(scans, cfg);

  const fs::path out = output_dir(g);
  fs::create_directories(out / "voxels");
  std::ofstream index(out / "segments.csv");
  if (!index) throw DataError("cannot write segments index");
  index << "scan_id,segment_id,points,cx,cy,cz,voxel_file\n" << std::setprecision(9);
  std::size_t written = 0;
  for (const Segment& s : segments) {
    const std::string name = segment_name(s.scan_id, s.id) + ".osvx";
    write_voxel_grid(out / "voxels" / name, voxelize(s));
    index << s.scan_id << ',' << s.id << ',' << s.points.size() << ',' << s.centroid.x() << ',' << s.centroid.y()
          << ',' << s.centroid.z() << ",voxels/" << name << '\n';
    ++written;
  }
  write_labels_csv(out / "labels.csv", cross_scan_labels(segments, traj, cfg));

  std::size_t patches = 0;
  if (!o.images.empty()) {
    fs::create_directories(out / "patches");
    std::ofstream pidx(out / "patches.csv");
    if (!pidx) throw DataError("cannot write patch index");
    pidx << "file,scan_id,segment_id,u_min,v_min,u_max,v_max,visible_fraction\n" << std::setprecision(9);
    std::map<std::uint32_t, Image> images;
    for (const Segment& s : segments) {
      auto it = images.find(s.scan_id);
      if (it == images.end()) {
        const fs::path img = fs::path(o.images) / (scan_name(s.scan_id) + ".png");
        if (!fs::exists(img)) continue;
        it = images.emplace(s.scan_id, read_png(img)).first;
      }
      const auto patch = extract_patch(s, *cfg.camera, o.margin, s.scan_id);
      if (!patch) continue;
      const std::string name = segment_name(s.scan_id, s.id) + ".png";
      write_png(out / "patches" / name, crop(it->second, patch->bbox));
      pidx << "patches/" << name << ',' << s.scan_id << ',' << s.id << ',' << patch->bbox.u_min << ','
           << patch->bbox.v_min << ',' << patch->bbox.u_max << ',' << patch->bbox.v_max << ','
           << patch->visible_fraction << '\n';
      ++patches;
    }
  }
  std::cerr << "exported " << written << " voxel grids and " << patches << " image patches\n";
}

struct SynthGenerateOptions {
  WorldGenerationParams params;
  std::string name = "world.toml";
};

void run_synth_generate(const Globals& g, const SynthGenerateOptions& o) {
  const PipelineConfig cfg = load_config(g);
  const SyntheticWorld world = generate_world(o.params, cfg.seed);
  const fs::path out = output_dir(g) / o.name;
  save_world(out, world);
  std::cerr << "world: " << world.objects.size() << " objects -> " << out.string() << "\n";
}

struct SynthScanOptions {
  std::string world;
  std::string poses;
  std::size_t count = 20;
  double x0 = 0.0;
  double spacing = 3.0;
  double sensor_height = 1.73;
  double noise = 0.0;
};

void run_synth_scan(const Globals& g, const SynthScanOptions& o) {
  const PipelineConfig cfg = load_config(g);
  const SyntheticWorld world = load_world(o.world);
  const Trajectory traj =
      o.poses.empty() ? straight_trajectory(o.count, o.x0, o.spacing, o.sensor_height) : read_kitti_poses(o.poses);
  const fs::path out = output_dir(g);
  fs::create_directories(out / "velodyne");
  fs::create_directories(out / "labels");
  for (const TrajectoryEntry& e : traj) {
    const SimulatedScan sim = simulate_scan(world, e.T_world_sensor, cfg.lidar, o.noise, cfg.seed + e.scan_id);
    write_kitti_scan(out / "velodyne" / (scan_name(e.scan_id) + ".bin"), sim.scan);
    std::ostringstream labels;
    for (int l : sim.labels) labels << l << '\n';
    write_text_file(out / "labels" / (scan_name(e.scan_id) + ".txt"), labels.str());
  }
  write_kitti_poses(out / "poses.txt", traj);
  save_calibration(out / "calib.toml", Calibration{cfg.lidar, cfg.camera});
  std::cerr << "simulated " << traj.size() << " scans -> " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-scan LiDAR global localization"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline TOML")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random choice");
  auto* out_opt = app.add_option("--output", g.output, "Output directory");

  BuildMapOptions build;
  auto* build_cmd = app.add_subcommand("build-map", "Build a segment map from scans with known poses");
  add_data_options(build_cmd, build.data);
  build_cmd->add_flag("--no-points", build.no_points, "Strip raw segment points from the map file");
  build_cmd->add_option("--name", build.name, "Map file name inside the output directory");

  LocalizeOptions loc;
  auto* loc_cmd = app.add_subcommand("localize", "Localize scans against a map; one JSON line per scan");
  add_data_options(loc_cmd, loc.data, false);
  loc_cmd->add_option("--map", loc.map, "Map file")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--threads", loc.threads, "Worker threads");

  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics");
  eval_cmd->require_subcommand(1);
  WakeupOptions wake;
  auto* wake_cmd = eval_cmd->add_subcommand("wakeup", "Wake-up distance CDF, recall/precision and ICP errors");
  add_data_options(wake_cmd, wake.data);
  wake_cmd->add_option("--results", wake.results, "JSON lines written by localize")
      ->required()
      ->check(CLI::ExistingFile);
  wake_cmd->add_option("--map", wake.map, "Map with points; enables ICP error evaluation (needs --scans)")
      ->check(CLI::ExistingFile);
  wake_cmd->add_option("--success-radius", wake.success_radius, "Success radius (m)");

  RetrievalOptions ret;
  auto* ret_cmd = eval_cmd->add_subcommand("retrieval", "Descriptor precision-recall curve");
  add_data_options(ret_cmd, ret.data);
  ret_cmd->add_option("--embeddings", ret.embeddings, "OSEM files; default computes descriptors from scans");
  ret_cmd->add_option("--labels", ret.labels, "Label CSV; default labels by overlap from scans and poses")
      ->check(CLI::ExistingFile);

  ExportOptions exp;
  auto* exp_cmd = app.add_subcommand("export-training", "Write voxel grids, labels and image patches");
  add_data_options(exp_cmd, exp.data);
  exp_cmd->add_option("--images", exp.images, "Directory of PNG images named like the scans");
  exp_cmd->add_option("--margin", exp.margin, "Patch margin as a fraction of the box size");

  auto* synth_cmd = app.add_subcommand("synth", "Synthetic worlds and scans");
  synth_cmd->require_subcommand(1);
  SynthGenerateOptions gen;
  auto* gen_cmd = synth_cmd->add_subcommand("generate", "Random world file");
  gen_cmd->add_option("--objects", gen.params.object_count, "Number of objects");
  gen_cmd->add_option("--length", gen.params.length, "Length of the corridor along x (m)");
  gen_cmd->add_option("--name", gen.name, "World file name inside the output directory");
  SynthScanOptions sim;
  auto* sim_cmd = synth_cmd->add_subcommand("scan", "Ray-cast scans of a world file");
  sim_cmd->add_option("--world", sim.world, "World TOML")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--poses", sim.poses, "KITTI poses file; default is a straight line")
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--count", sim.count, "Poses on the straight line");
  sim_cmd->add_option("--x0", sim.x0, "Start of the straight line (m)");
  sim_cmd->add_option("--spacing", sim.spacing, "Pose spacing on the straight line (m)");
  sim_cmd->add_option("--sensor-height", sim.sensor_height, "Sensor height (m)");
  sim_cmd->add_option("--noise", sim.noise, "Gaussian range noise sigma (m)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  g.output_set = out_opt->count() > 0;

  try {
    if (build_cmd->parsed()) run_build_map(g, build);
    if (loc_cmd->parsed()) run_localize(g, loc);
    if (wake_cmd->parsed()) run_evaluate_wakeup(g, wake);
    if (ret_cmd->parsed()) run_evaluate_retrieval(g, ret);
    if (exp_cmd->parsed()) run_export_training(g, exp);
    if (gen_cmd->parsed()) run_synth_generate(g, gen);
    if (sim_cmd->parsed()) run_synth_scan(g, sim);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
