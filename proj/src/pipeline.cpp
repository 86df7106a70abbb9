#include "oneshot/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "oneshot/error.hpp"

namespace oneshot {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_backend(const SegmentMap& map, const DescriptorBackend& backend) {
  if (backend.dim() != map.dim()) {
    throw DataError("descriptor backend '" + backend.id() + "' has dim " + std::to_string(backend.dim()) +
                    " but the map was built with dim " + std::to_string(map.dim()));
  }
  if (backend.id() != map.metadata().backend_id) {
    throw DataError("descriptor backend '" + backend.id() + "' does not match the map's backend '" +
                    map.metadata().backend_id + "'");
  }
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return static_cast<std::size_t>(k.x * 73856093) ^ static_cast<std::size_t>(k.y * 19349663) ^
           static_cast<std::size_t>(k.z * 83492791);
  }
};

}  // namespace

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Localizer::Localizer(std::shared_ptr<const SegmentMap> map, std::shared_ptr<const DescriptorBackend> backend,
                     PipelineConfig cfg)
    : map_(std::move(map)), backend_(std::move(backend)), cfg_(std::move(cfg)) {
  if (!map_ || !backend_) throw ConfigError("localizer needs a map and a descriptor backend");
  cfg_.validate();
  check_backend(*map_, *backend_);
}

LocalizationResult Localizer::localize(const Scan& raw_scan) const {
  const auto t_start = Clock::now();
  LocalizationResult res;
  res.scan_id = raw_scan.id;

  auto t = Clock::now();
  const Scan scan = prepare_scan(raw_scan, cfg_);
  const std::vector<Segment> segments = segment_scan(scan, cfg_.lidar, cfg_.segmentation);
  res.timings.segmentation_ms = ms_since(t);
  res.segment_count = segments.size();
  if (segments.empty()) {
    res.rejected_stage = "segmentation";
    res.pose.reason = "no segments extracted";
    res.timings.total_ms = ms_since(t_start);
    return res;
  }

  t = Clock::now();
  std::vector<Descriptor> descriptors;
  descriptors.reserve(segments.size());
  for (const Segment& s : segments) descriptors.push_back(backend_->describe(s));
  res.timings.description_ms = ms_since(t);

  t = Clock::now();
  std::vector<MatchCandidate> candidates;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto nn = knn(*map_, descriptors[i], cfg_.k, segments[i].id, segments[i].centroid);
    candidates.insert(candidates.end(), nn.begin(), nn.end());
  }
  res.timings.matching_ms = ms_since(t);
  res.candidate_count = candidates.size();
  if (candidates.empty()) {
    res.rejected_stage = "matching";
    res.pose.reason = "no candidate matches";
    res.timings.total_ms = ms_since(t_start);
    return res;
  }

  t = Clock::now();
  res.pose = verify(candidates, cfg_.verification);
  res.timings.verification_ms = ms_since(t);
  if (!res.pose.accepted) res.rejected_stage = "verification";
  res.timings.total_ms = ms_since(t_start);
  return res;
}

std::vector<LocalizationResult> Localizer::localize_all(std::span<const Scan> scans) const {
  std::vector<LocalizationResult> results(scans.size());
  const std::size_t workers = std::clamp<std::size_t>(cfg_.threads, 1, std::max<std::size_t>(scans.size(), 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < scans.size(); ++i) results[i] = localize(scans[i]);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < scans.size(); i = next++) {
        try {
          results[i] = localize(scans[i]);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

LocalizationResult localize_scan(const SegmentMap& map, const Scan& scan, const PipelineConfig& cfg) {
  const auto backend = make_descriptor_backend(cfg.descriptor);
  check_backend(map, *backend);
  // Non-owning aliases; the map and backend outlive the localizer here.
  const Localizer loc(std::shared_ptr<const SegmentMap>(std::shared_ptr<void>{}, &map),
                      std::shared_ptr<const DescriptorBackend>(std::shared_ptr<void>{}, backend.get()), cfg);
  return loc.localize(scan);
}

Scan prepare_scan(const Scan& scan, const PipelineConfig& cfg) {
  if (!cfg.source_lidar) return scan;
  return subsample_beams(scan, *cfg.source_lidar, cfg.lidar);
}

SegmentMap build_map_from_trajectory(std::span<const Scan> scans, const Trajectory& trajectory,
                                     const PipelineConfig& cfg, const DescriptorBackend& backend) {
  cfg.validate();
  struct Entry {
    Segment world;
    Descriptor descriptor;
  };
  std::vector<Entry> entries;
  for (const Scan& raw : scans) {
    const auto pose = find_pose(trajectory, raw.id);
    if (!pose) throw DataError("no trajectory pose for scan id " + std::to_string(raw.id));
    const Scan scan = prepare_scan(raw, cfg);
    for (const Segment& seg : segment_scan(scan, cfg.lidar, cfg.segmentation)) {
      Descriptor d = backend.describe(seg);
      entries.push_back({seg.transformed(*pose, Frame::kWorld), std::move(d)});
    }
  }
  if (entries.empty()) throw DataError("no segments extracted from the mapping scans");

  std::vector<std::size_t> keep(entries.size());
  std::iota(keep.begin(), keep.end(), 0);
  if (cfg.map.dedup && entries.size() > 1) {
    // Threshold from the pairwise descriptor distance distribution; sampled
    // deterministically for large databases.
    std::vector<double> dists;
    constexpr std::size_t kExhaustiveLimit = 700;
    constexpr std::size_t kSampledPairs = 250000;
    if (entries.size() <= kExhaustiveLimit) {
      for (std::size_t i = 0; i < entries.size(); ++i)
        for (std::size_t j = i + 1; j < entries.size(); ++j)
          dists.push_back(descriptor_distance(entries[i].descriptor, entries[j].descriptor));
    } else {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_int_distribution<std::size_t> pick(0, entries.size() - 1);
      while (dists.size() < kSampledPairs) {
        const std::size_t i = pick(rng);
        const std::size_t j = pick(rng);
        if (i != j) dists.push_back(descriptor_distance(entries[i].descriptor, entries[j].descriptor));
      }
    }
    const double threshold = percentile(std::move(dists), cfg.map.dedup_percentile);

    // Larger segments first, so a merge keeps the larger one.
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
      return entries[a].world.points.size() > entries[b].world.points.size();
    });
    const double r = cfg.map.dedup_radius;
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
    auto cell_of = [&](const Point3& p) {
      return CellKey{static_cast<std::int64_t>(std::floor(p.x() / r)), static_cast<std::int64_t>(std::floor(p.y() / r)),
                     static_cast<std::int64_t>(std::floor(p.z() / r))};
    };
    std::vector<std::size_t> kept;
    for (std::size_t idx : keep) {
      const Entry& e = entries[idx];
      const CellKey c = cell_of(e.world.centroid);
      bool duplicate = false;
      for (std::int64_t dx = -1; dx <= 1 && !duplicate; ++dx)
        for (std::int64_t dy = -1; dy <= 1 && !duplicate; ++dy)
          for (std::int64_t dz = -1; dz <= 1 && !duplicate; ++dz) {
            const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
            if (it == grid.end()) continue;
            for (std::size_t other : it->second) {
              if ((entries[other].world.centroid - e.world.centroid).norm() <= r &&
                  descriptor_distance(entries[other].descriptor, e.descriptor) <= threshold) {
                duplicate = true;
                break;
              }
            }
          }
      if (duplicate) continue;
      grid[c].push_back(idx);
      kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
    keep = std::move(kept);
  }

  std::vector<MapSegment> segments;
  segments.reserve(keep.size());
  for (std::size_t idx : keep) {
    MapSegment ms{std::move(entries[idx].world), std::move(entries[idx].descriptor)};
    ms.segment.id = static_cast<std::uint32_t>(segments.size());
    segments.push_back(std::move(ms));
  }
  MapMetadata meta;
  meta.backend_id = backend.id();
  meta.creation_info = "scans=" + std::to_string(scans.size()) + " segments=" + std::to_string(entries.size()) +
                       " kept=" + std::to_string(segments.size());
  meta.points_stripped = !cfg.map.include_points;
  return build_map(std::move(segments), std::move(meta));
}

SegmentMap build_map_from_trajectory(std::span<const Scan> scans, const Trajectory& trajectory,
                                     const PipelineConfig& cfg) {
  const auto backend = make_descriptor_backend(cfg.descriptor);
  return build_map_from_trajectory(scans, trajectory, cfg, *backend);
}

std::string result_to_json_line(const LocalizationResult& r) {
  nlohmann::ordered_json j;
  j["scan_id"] = r.scan_id;
  j["accepted"] = r.pose.accepted;
  const Eigen::Matrix4d m = r.pose.T_map_query.matrix();
  std::vector<double> flat;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) flat.push_back(m(i, k));
  j["T_map_query"] = flat;
  j["clique_size"] = r.pose.inliers.size();
  j["rms_residual"] = r.pose.rms_residual;
  j["timings_ms"] = {{"segmentation", r.timings.segmentation_ms},
                     {"description", r.timings.description_ms},
                     {"matching", r.timings.matching_ms},
                     {"verification", r.timings.verification_ms},
                     {"total", r.timings.total_ms}};
  j["segment_count"] = r.segment_count;
  j["candidate_count"] = r.candidate_count;
  if (!r.pose.accepted) {
    j["rejected_stage"] = r.rejected_stage;
    j["reason"] = r.pose.reason;
  }
  return j.dump();
}

LocalizationResult result_from_json_line(const std::string& line) {
  LocalizationResult r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.scan_id = j.at("scan_id").get<std::uint32_t>();
    r.pose.accepted = j.at("accepted").get<bool>();
    const auto flat = j.at("T_map_query").get<std::vector<double>>();
    if (flat.size() != 16) throw DataError("T_map_query needs 16 values");
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) m(i, k) = flat[static_cast<std::size_t>(i * 4 + k)];
    r.pose.T_map_query = SE3::from_matrix(m);
    r.pose.rms_residual = j.value("rms_residual", 0.0);
    r.pose.inliers.resize(j.value("clique_size", std::size_t{0}));
    if (j.contains("timings_ms")) {
      const auto& t = j["timings_ms"];
      r.timings.segmentation_ms = t.value("segmentation", 0.0);
      r.timings.description_ms = t.value("description", 0.0);
      r.timings.matching_ms = t.value("matching", 0.0);
      r.timings.verification_ms = t.value("verification", 0.0);
      r.timings.total_ms = t.value("total", 0.0);
    }
    r.segment_count = j.value("segment_count", std::size_t{0});
    r.candidate_count = j.value("candidate_count", std::size_t{0});
    r.rejected_stage = j.value("rejected_stage", std::string{});
    r.pose.reason = j.value("reason", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad result line: ") + e.what());
  }
  return r;
}

std::vector<LocalizationResult> read_results_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file '" + path.string() + "'");
  std::vector<LocalizationResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(result_from_json_line(line));
  }
  return out;
}

}  // namespace oneshot
