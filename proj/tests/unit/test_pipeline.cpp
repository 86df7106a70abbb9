#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"
#include "oneshot/pipeline.hpp"
#include "scenes.hpp"

using namespace oneshot;

namespace {

const fixtures::SyntheticRun& shared_run() {
  static const fixtures::SyntheticRun run = fixtures::build_synthetic_run(1);
  return run;
}

}  // namespace

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50.0), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile({10, 20}, 10.0), 11.0);
  EXPECT_DOUBLE_EQ(percentile({7}, 33.0), 7.0);
}

TEST(BuildMap, SingleScanWithIdentityPoseKeepsSensorSegments) {
  const auto scene = fixtures::two_box_scene();
  PipelineConfig cfg;
  Scan scan = scene.sim.scan;
  scan.id = 4;
  const Trajectory traj{{4, SE3()}};
  const SegmentMap map = build_map_from_trajectory(std::span(&scan, 1), traj, cfg);
  const auto segs = segment_scan(scan, cfg.lidar, cfg.segmentation);
  ASSERT_EQ(map.size(), segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Segment& m = map.segments()[i].segment;
    EXPECT_EQ(m.frame, Frame::kWorld);
    ASSERT_EQ(m.points.size(), segs[i].points.size());
    for (std::size_t j = 0; j < m.points.size(); ++j) EXPECT_TRUE((m.points[j] - segs[i].points[j]).norm() < 1e-5);
    EXPECT_EQ(map.segments()[i].descriptor, describe_handcrafted(segs[i]));
  }
  EXPECT_EQ(map.metadata().backend_id, "handcrafted");
  EXPECT_FALSE(map.metadata().points_stripped);
}

TEST(BuildMap, DuplicateObservationsCollapse) {
  const auto scene = fixtures::two_box_scene();
  std::vector<Scan> scans(2, scene.sim.scan);
  scans[0].id = 0;
  scans[1].id = 1;
  const Trajectory traj{{0, scene.pose}, {1, scene.pose}};
  PipelineConfig cfg;
  EXPECT_EQ(build_map_from_trajectory(scans, traj, cfg).size(), 2u);
  cfg.map.dedup = false;
  EXPECT_EQ(build_map_from_trajectory(scans, traj, cfg).size(), 4u);
}

TEST(BuildMap, MissingPoseNamesScan) {
  const auto scene = fixtures::two_box_scene();
  Scan scan = scene.sim.scan;
  scan.id = 7;
  try {
    build_map_from_trajectory(std::span(&scan, 1), Trajectory{{6, SE3()}}, PipelineConfig{});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos) << e.what();
  }
}

TEST(BuildMap, StrippedPointsFlag) {
  const auto scene = fixtures::two_box_scene();
  PipelineConfig cfg;
  cfg.map.include_points = false;
  const SegmentMap map = build_map_from_trajectory(std::span(&scene.sim.scan, 1), Trajectory{{0, SE3()}}, cfg);
  EXPECT_FALSE(map.has_points());
}

TEST(Localize, EmptyScanRejectedAtSegmentation) {
  const auto& run = shared_run();
  const LocalizationResult r = localize_scan(*run.map, Scan{}, run.cfg);
  EXPECT_FALSE(r.pose.accepted);
  EXPECT_EQ(r.rejected_stage, "segmentation");
  EXPECT_EQ(r.segment_count, 0u);
}

TEST(Localize, MappingScanLocalizesItself) {
  const auto& run = shared_run();
  const Scan& scan = run.mapping_scans[9];
  const LocalizationResult r = localize_scan(*run.map, scan, run.cfg);
  ASSERT_TRUE(r.pose.accepted) << r.rejected_stage << ": " << r.pose.reason;
  const SE3& truth = run.mapping[9].T_world_sensor;
  EXPECT_LT((r.pose.T_map_query.translation() - truth.translation()).norm(), 0.1);
  EXPECT_LT(fixtures::yaw_error_deg(r.pose.T_map_query, truth), 1.0);
  EXPECT_TRUE(r.rejected_stage.empty());
  EXPECT_GE(r.pose.inliers.size(), run.cfg.verification.min_clique_size);
  EXPECT_GT(r.candidate_count, 0u);
  EXPECT_LE(r.candidate_count, r.segment_count * run.cfg.k);
}

TEST(Localize, DeterministicAndTimed) {
  const auto& run = shared_run();
  const auto queries = fixtures::random_queries(run.world, run.cfg.lidar, 3, 5, 0.02);
  const Localizer loc(run.map, std::make_shared<HandcraftedBackend>(), run.cfg);
  for (const auto& q : queries) {
    const auto a = loc.localize(q.scan);
    const auto b = loc.localize(q.scan);
    EXPECT_EQ(a.pose.accepted, b.pose.accepted);
    EXPECT_EQ(a.pose.T_map_query.matrix(), b.pose.T_map_query.matrix());
    EXPECT_EQ(a.pose.inliers.size(), b.pose.inliers.size());
    EXPECT_LE(a.timings.stage_sum(), a.timings.total_ms + 1e-6);
    EXPECT_GE(a.timings.segmentation_ms, 0.0);
    EXPECT_EQ(a.scan_id, q.scan.id);
  }
}

TEST(Localize, LocalizeAllPreservesOrder) {
  const auto& run = shared_run();
  const auto queries = fixtures::random_queries(run.world, run.cfg.lidar, 8, 6, 0.02);
  std::vector<Scan> scans;
  for (const auto& q : queries) scans.push_back(q.scan);
  scans.push_back(Scan{});
  scans.back().id = 77;
  PipelineConfig cfg = run.cfg;
  cfg.threads = 4;
  const Localizer parallel(run.map, std::make_shared<HandcraftedBackend>(), cfg);
  const Localizer serial(run.map, std::make_shared<HandcraftedBackend>(), run.cfg);
  const auto a = parallel.localize_all(scans);
  ASSERT_EQ(a.size(), scans.size());
  for (std::size_t i = 0; i < scans.size(); ++i) {
    EXPECT_EQ(a[i].scan_id, scans[i].id);
    const auto b = serial.localize(scans[i]);
    EXPECT_EQ(a[i].pose.accepted, b.pose.accepted);
    EXPECT_EQ(a[i].pose.T_map_query.matrix(), b.pose.T_map_query.matrix());
  }
}

TEST(Localize, BackendMustMatchMap) {
  const auto& run = shared_run();
  EmbeddingTable t(4);
  t.insert({0, 0}, Descriptor{{0, 0, 0, 0}});
  EXPECT_THROW(Localizer(run.map, std::make_shared<EmbeddingFileBackend>(t), run.cfg), DataError);
  EXPECT_THROW(Localizer(nullptr, std::make_shared<HandcraftedBackend>(), run.cfg), ConfigError);
}

TEST(Localize, SourceLidarIsSubsampled) {
  PipelineConfig cfg;
  cfg.source_lidar = make_uniform_lidar(64, 15.0, -16.5, 1800, 0.5, 100.0);
  const auto scene = fixtures::two_box_scene();
  const SimulatedScan dense = simulate_scan(scene.world, scene.pose, *cfg.source_lidar, 0.0);
  const Scan prepared = prepare_scan(dense.scan, cfg);
  EXPECT_LT(prepared.points.size(), dense.scan.points.size() / 3);
  EXPECT_GT(prepared.points.size(), dense.scan.points.size() / 5);
  PipelineConfig plain;
  EXPECT_EQ(prepare_scan(dense.scan, plain).points.size(), dense.scan.points.size());
}

TEST(ResultsJson, RoundTrip) {
  LocalizationResult r;
  r.scan_id = 42;
  r.pose.accepted = true;
  r.pose.T_map_query = SE3::from_yaw(0.25, Point3(1.5, -2.25, 0.125));
  r.pose.rms_residual = 0.0625;
  r.pose.inliers.resize(5);
  r.timings = {1.5, 2.5, 0.25, 0.125, 5.0};
  r.segment_count = 17;
  r.candidate_count = 85;
  const std::string line = result_to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(line.find("rejected_stage"), std::string::npos);
  const LocalizationResult back = result_from_json_line(line);
  EXPECT_EQ(back.scan_id, 42u);
  EXPECT_TRUE(back.pose.accepted);
  EXPECT_TRUE(back.pose.T_map_query.matrix().isApprox(r.pose.T_map_query.matrix(), 1e-12));
  EXPECT_EQ(back.pose.inliers.size(), 5u);
  EXPECT_DOUBLE_EQ(back.timings.total_ms, 5.0);
  EXPECT_EQ(back.segment_count, 17u);
  EXPECT_EQ(back.candidate_count, 85u);

  LocalizationResult rej;
  rej.scan_id = 3;
  rej.rejected_stage = "matching";
  rej.pose.reason = "no candidate matches";
  const LocalizationResult rb = result_from_json_line(result_to_json_line(rej));
  EXPECT_FALSE(rb.pose.accepted);
  EXPECT_EQ(rb.rejected_stage, "matching");
  EXPECT_EQ(rb.pose.reason, "no candidate matches");

  const auto dir = fixtures::temp_dir("jsonl");
  write_text_file(dir / "r.jsonl", line + "\n\n" + result_to_json_line(rej) + "\n");
  EXPECT_EQ(read_results_jsonl(dir / "r.jsonl").size(), 2u);
  EXPECT_THROW(result_from_json_line("{\"scan_id\": 1"), DataError);
  EXPECT_THROW(result_from_json_line("{\"accepted\": true}"), DataError);
}
