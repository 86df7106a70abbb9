#include "oneshot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

namespace {

struct Box {
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = Point3::Constant(-std::numeric_limits<double>::infinity());

  void add(const Point3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool overlaps(const Box& o) const { return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all(); }
};

Box bounds(std::span<const Point3> pts) {
  Box b;
  for (const Point3& p : pts) b.add(p);
  return b;
}

std::unordered_set<std::uint64_t> occupied(std::span<const Point3> pts, const Point3& origin, double voxel) {
  std::unordered_set<std::uint64_t> cells;
  for (const Point3& p : pts) {
    const Eigen::Vector3d c = ((p - origin) / voxel).array().floor();
    const auto x = static_cast<std::uint64_t>(c.x());
    const auto y = static_cast<std::uint64_t>(c.y());
    const auto z = static_cast<std::uint64_t>(c.z());
    cells.insert(x | (y << 21) | (z << 42));
  }
  return cells;
}

void check_csv(std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

}  // namespace

double overlap_iou(std::span<const Point3> a, std::span<const Point3> b, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ConfigError("IoU voxel size must be positive");
  if (a.empty() || b.empty()) return 0.0;
  const Box ba = bounds(a);
  const Box bb = bounds(b);
  if (!ba.overlaps(bb)) return 0.0;
  const Point3 origin = ba.lo.cwiseMin(bb.lo);
  const Point3 extent = (ba.hi.cwiseMax(bb.hi) - origin) / voxel_size;
  if (extent.maxCoeff() >= static_cast<double>(1 << 21)) {
    throw DataError("IoU grid too large for the given voxel size");
  }
  const auto ca = occupied(a, origin, voxel_size);
  const auto cb = occupied(b, origin, voxel_size);
  std::size_t inter = 0;
  for (std::uint64_t c : ca) inter += cb.count(c);
  const std::size_t uni = ca.size() + cb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<CorrespondenceLabel> label_correspondences(std::span<const Segment> segments_a,
                                                       std::span<const Segment> segments_b,
                                                       const Trajectory& poses, double iou_threshold,
                                                       double voxel_size) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must be in [0, 1]");
  auto to_world = [&](const Segment& s) {
    if (s.frame == Frame::kWorld) return s;
    const auto pose = find_pose(poses, s.scan_id);
    if (!pose) throw DataError("no pose for scan id " + std::to_string(s.scan_id));
    return s.transformed(*pose, Frame::kWorld);
  };
  std::vector<Segment> wa;
  std::vector<Segment> wb;
  std::vector<Box> boxa;
  std::vector<Box> boxb;
  for (const Segment& s : segments_a) {
    wa.push_back(to_world(s));
    boxa.push_back(bounds(wa.back().points));
  }
  for (const Segment& s : segments_b) {
    wb.push_back(to_world(s));
    boxb.push_back(bounds(wb.back().points));
  }
  std::vector<CorrespondenceLabel> labels;
  labels.reserve(wa.size() * wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) {
    for (std::size_t j = 0; j < wb.size(); ++j) {
      CorrespondenceLabel l{wa[i].scan_id, wa[i].id, wb[j].scan_id, wb[j].id, 0.0, false};
      if (boxa[i].overlaps(boxb[j])) l.overlap_iou = overlap_iou(wa[i].points, wb[j].points, voxel_size);
      l.is_match = l.overlap_iou >= iou_threshold;
      labels.push_back(l);
    }
  }
  return labels;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const CorrespondenceLabel> labels) {
  std::ofstream out(path);
  check_csv(out, path);
  out << "scan_a,segment_a,scan_b,segment_b,overlap_iou,is_match\n" << std::setprecision(17);
  for (const auto& l : labels) {
    out << l.scan_a << ',' << l.segment_a << ',' << l.scan_b << ',' << l.segment_b << ',' << l.overlap_iou << ','
        << (l.is_match ? 1 : 0) << '\n';
  }
}

std::vector<CorrespondenceLabel> read_labels_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<CorrespondenceLabel> labels;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    CorrespondenceLabel l;
    int match = 0;
    if (!(row >> l.scan_a >> l.segment_a >> l.scan_b >> l.segment_b >> l.overlap_iou >> match)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed label row");
    }
    l.is_match = match != 0;
    labels.push_back(l);
  }
  return labels;
}

std::vector<double> wakeup_distances(std::span<const std::uint8_t> success, std::span<const double> arc) {
  if (success.size() != arc.size()) throw DataError("success flags and arc lengths differ in length");
  std::vector<double> out(success.size(), std::numeric_limits<double>::infinity());
  double next_success_arc = std::numeric_limits<double>::infinity();
  for (std::size_t i = success.size(); i-- > 0;) {
    if (success[i]) next_success_arc = arc[i];
    out[i] = next_success_arc - arc[i];
  }
  return out;
}

double cdf_at(std::span<const double> distances, double x) {
  if (distances.empty()) return 0.0;
  const auto n = std::count_if(distances.begin(), distances.end(), [&](double d) { return d <= x + 1e-9; });
  return static_cast<double>(n) / static_cast<double>(distances.size());
}

std::vector<CdfPoint> wakeup_cdf(std::span<const double> distances, double step, double max_distance) {
  if (!(step > 0.0)) throw ConfigError("CDF step must be positive");
  double top = std::max(max_distance, 0.0);
  for (double d : distances)
    if (std::isfinite(d)) top = std::max(top, d);
  const auto steps = static_cast<std::size_t>(std::ceil(top / step - 1e-9));
  std::vector<CdfPoint> cdf;
  cdf.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double x = static_cast<double>(k) * step;
    cdf.push_back({x, cdf_at(distances, x)});
  }
  return cdf;
}

std::vector<double> WakeupReport::distances() const {
  std::vector<double> d;
  d.reserve(records.size());
  for (const auto& r : records) d.push_back(r.distance);
  return d;
}

WakeupReport evaluate_wakeup(std::span<const LocalizationResult> results, const Trajectory& trajectory,
                             double success_radius) {
  const LocalizationReport loc = evaluate_localization(results, trajectory, success_radius);
  std::vector<double> arc(results.size(), 0.0);
  Point3 prev = Point3::Zero();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const Point3 p = find_pose(trajectory, results[i].scan_id)->translation();
    if (i > 0) arc[i] = arc[i - 1] + (p - prev).norm();
    prev = p;
  }
  WakeupReport report;
  const std::vector<double> dist = wakeup_distances(loc.success, arc);
  for (std::size_t i = 0; i < results.size(); ++i) {
    report.records.push_back({results[i].scan_id, loc.success[i] != 0, loc.translation_errors[i], dist[i]});
  }
  report.cdf = wakeup_cdf(dist);
  return report;
}

LocalizationReport evaluate_localization(std::span<const LocalizationResult> results, const Trajectory& trajectory,
                                         double success_radius) {
  if (!(success_radius > 0.0)) throw ConfigError("success_radius must be positive");
  LocalizationReport r;
  r.queries = results.size();
  for (const LocalizationResult& res : results) {
    const auto gt = find_pose(trajectory, res.scan_id);
    if (!gt) throw DataError("no ground-truth pose for scan id " + std::to_string(res.scan_id));
    double err = std::numeric_limits<double>::infinity();
    double yaw = std::numeric_limits<double>::infinity();
    bool ok = false;
    if (res.pose.accepted) {
      ++r.accepted;
      err = (res.pose.T_map_query.translation() - gt->translation()).norm();
      yaw = std::abs(rad2deg(wrap_angle(res.pose.T_map_query.yaw() - gt->yaw())));
      ok = err <= success_radius;
    }
    r.successes += ok ? 1 : 0;
    r.success.push_back(ok ? 1 : 0);
    r.translation_errors.push_back(err);
    r.yaw_errors_deg.push_back(yaw);
  }
  r.recall = r.queries ? static_cast<double>(r.successes) / static_cast<double>(r.queries) : 0.0;
  r.precision = r.accepted ? static_cast<double>(r.successes) / static_cast<double>(r.accepted) : 1.0;
  return r;
}

void add_icp_errors(LocalizationReport& report, std::span<const LocalizationResult> results,
                    std::span<const Scan> scans, const SegmentMap& map, const PipelineConfig& cfg) {
  if (!map.has_points()) throw DataError("ICP evaluation needs a map with points; rebuild it without --no-points");
  if (report.success.size() != results.size()) throw DataError("report does not belong to these results");
  std::map<std::uint32_t, const Scan*> by_id;
  for (const Scan& s : scans) by_id[s.id] = &s;

  report.icp_corrections.clear();
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!report.success[i]) continue;
    const auto it = by_id.find(results[i].scan_id);
    if (it == by_id.end()) throw DataError("no scan for scan id " + std::to_string(results[i].scan_id));
    const SE3& T = results[i].pose.T_map_query;

    Points3 query;
    for (const Segment& s : segment_scan(prepare_scan(*it->second, cfg), cfg.lidar, cfg.segmentation)) {
      query.insert(query.end(), s.points.begin(), s.points.end());
    }
    Points3 local;
    const double r2 = cfg.evaluation.icp_map_radius * cfg.evaluation.icp_map_radius;
    for (const MapSegment& ms : map.segments()) {
      for (const Point3& p : ms.segment.points) {
        if ((p - T.translation()).squaredNorm() <= r2) local.push_back(p);
      }
    }
    if (query.empty() || local.empty()) continue;
    const IcpResult icp = icp_refine(query, local, T, cfg.icp);
    report.icp_corrections.emplace_back(results[i].scan_id, icp.correction.translation().norm());
  }

  report.icp_mean = 0.0;
  report.icp_std = 0.0;
  report.icp_histogram.clear();
  if (report.icp_corrections.empty()) return;
  for (const auto& [id, c] : report.icp_corrections) report.icp_mean += c;
  report.icp_mean /= static_cast<double>(report.icp_corrections.size());
  for (const auto& [id, c] : report.icp_corrections) report.icp_std += (c - report.icp_mean) * (c - report.icp_mean);
  report.icp_std = std::sqrt(report.icp_std / static_cast<double>(report.icp_corrections.size()));
  for (const auto& [id, c] : report.icp_corrections) {
    const auto bin = static_cast<std::size_t>(c / kIcpHistogramBin);
    if (bin >= report.icp_histogram.size()) report.icp_histogram.resize(bin + 1, 0);
    ++report.icp_histogram[bin];
  }
}

PRPoint precision_recall_at(std::span<const LabeledDistance> pairs, double t) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t pos = 0;
  for (const auto& p : pairs) {
    pos += p.positive ? 1 : 0;
    if (p.distance <= t) (p.positive ? tp : fp) += 1;
  }
  if (pos == 0) throw DataError("precision/recall needs at least one positive pair");
  PRPoint out;
  out.threshold = t;
  out.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
  out.recall = static_cast<double>(tp) / static_cast<double>(pos);
  return out;
}

RetrievalReport pr_sweep(std::span<const LabeledDistance> pairs) {
  RetrievalReport rep;
  for (const auto& p : pairs) (p.positive ? rep.positives : rep.negatives) += 1;
  if (rep.positives == 0) throw DataError("retrieval evaluation needs at least one positive pair");

  std::vector<LabeledDistance> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.distance < b.distance; });
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (sorted[i].positive ? tp : fp) += 1;
    if (i + 1 < sorted.size() && sorted[i + 1].distance == sorted[i].distance) continue;
    rep.curve.push_back({sorted[i].distance, static_cast<double>(tp) / static_cast<double>(tp + fp),
                         static_cast<double>(tp) / static_cast<double>(rep.positives)});
  }
  double prev_r = 0.0;
  double prev_p = rep.curve.front().precision;
  for (const PRPoint& p : rep.curve) {
    rep.auc += (p.recall - prev_r) * 0.5 * (p.precision + prev_p);
    prev_r = p.recall;
    prev_p = p.precision;
  }
  return rep;
}

RetrievalReport evaluate_retrieval(const EmbeddingTable& descriptors, std::span<const CorrespondenceLabel> labels) {
  std::set<std::pair<EmbeddingKey, EmbeddingKey>> matches;
  for (const auto& l : labels) {
    if (!l.is_match) continue;
    const EmbeddingKey a{l.scan_a, l.segment_a};
    const EmbeddingKey b{l.scan_b, l.segment_b};
    matches.insert({std::min(a, b), std::max(a, b)});
  }
  std::vector<LabeledDistance> pairs;
  const auto& recs = descriptors.records();
  for (auto i = recs.begin(); i != recs.end(); ++i) {
    for (auto j = std::next(i); j != recs.end(); ++j) {
      if (i->first.first == j->first.first) continue;
      pairs.push_back({descriptor_distance(i->second, j->second), matches.count({i->first, j->first}) > 0});
    }
  }
  return pr_sweep(pairs);
}

void write_wakeup_csv(const std::filesystem::path& path, std::span<const CdfPoint> cdf) {
  std::ofstream out(path);
  check_csv(out, path);
  out << "distance_m,probability\n" << std::setprecision(17);
  for (const auto& p : cdf) out << p.distance_m << ',' << p.probability << '\n';
}

void write_pr_csv(const std::filesystem::path& path, std::span<const PRPoint> curve) {
  std::ofstream out(path);
  check_csv(out, path);
  out << "threshold,precision,recall\n" << std::setprecision(17);
  for (const auto& p : curve) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

void write_loc_errors_csv(const std::filesystem::path& path,
                          std::span<const std::pair<std::uint32_t, double>> corrections) {
  std::ofstream out(path);
  check_csv(out, path);
  out << "scan_id,icp_correction_m\n" << std::setprecision(17);
  for (const auto& [id, c] : corrections) out << id << ',' << c << '\n';
}

std::string summary_json(const Summary& summary) {
  nlohmann::ordered_json j;
  if (summary.localization) {
    const auto& l = *summary.localization;
    j["queries"] = l.queries;
    j["accepted"] = l.accepted;
    j["successes"] = l.successes;
    j["recall"] = l.recall;
    j["precision"] = l.precision;
    if (l.accepted == 0) j["precision_note"] = "no accepted localizations; precision is 1 by convention";
    j["error_mean"] = l.icp_mean;
    j["error_std"] = l.icp_std;
    j["icp_samples"] = l.icp_corrections.size();
    j["icp_histogram_bin_m"] = kIcpHistogramBin;
    j["icp_histogram"] = l.icp_histogram;
  }
  if (summary.wakeup) {
    const auto d = summary.wakeup->distances();
    j["wakeup_cdf_at_2_5m"] = cdf_at(d, 2.5);
  }
  if (summary.retrieval) {
    j["auc"] = summary.retrieval->auc;
    j["positives"] = summary.retrieval->positives;
    j["negatives"] = summary.retrieval->negatives;
  }
  return j.dump(2) + "\n";
}

}  // namespace oneshot
