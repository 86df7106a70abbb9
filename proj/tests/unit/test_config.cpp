#include <gtest/gtest.h>

#include "oneshot/binary_io.hpp"
#include "oneshot/calibration.hpp"
#include "oneshot/error.hpp"
#include "oneshot/pipeline.hpp"
#include "scenes.hpp"

using namespace oneshot;
namespace fs = std::filesystem;

namespace {

const char* kCalib = R"(
[lidar]
beam_elevations = [15.0, 13.0, 11.0, 9.0, 7.0, 5.0, 3.0, 1.0, -1.0, -3.0, -5.0, -7.0, -9.0, -11.0, -13.0, -15.0]
azimuth_columns = 1800
min_range = 0.5
max_range = 100.0

[camera]
fx = 100.0
fy = 110.0
cx = 50.0
cy = 40.0
width = 100
height = 80
T_cam_lidar = [0, -1, 0, 0.1, 0, 0, -1, 0.2, 1, 0, 0, 0.3, 0, 0, 0, 1]
)";

}  // namespace

TEST(Calibration, ParseAndRoundTrip) {
  const Calibration c = parse_calibration(kCalib);
  EXPECT_EQ(c.lidar.rows(), 16u);
  EXPECT_DOUBLE_EQ(c.lidar.beam_elevations[0], deg2rad(15.0));
  EXPECT_EQ(c.lidar.azimuth_columns, 1800);
  ASSERT_TRUE(c.camera);
  EXPECT_EQ(c.camera->height, 80);
  EXPECT_EQ(c.camera->T_cam_lidar.translation(), Point3(0.1, 0.2, 0.3));

  const Calibration back = parse_calibration(format_calibration(c));
  EXPECT_EQ(back.lidar.azimuth_columns, c.lidar.azimuth_columns);
  for (std::size_t i = 0; i < c.lidar.rows(); ++i) {
    EXPECT_NEAR(back.lidar.beam_elevations[i], c.lidar.beam_elevations[i], 1e-15);
  }
  EXPECT_TRUE(back.camera->T_cam_lidar.matrix().isApprox(c.camera->T_cam_lidar.matrix(), 1e-15));
}

TEST(Calibration, Errors) {
  EXPECT_THROW(parse_calibration("[camera]\nfx = 1.0\n"), ConfigError);
  EXPECT_THROW(parse_calibration("[lidar]\nbeam_elevations = [1.0, 2.0]\nazimuth_columns = 100\n"
                                 "min_range = 0.5\nmax_range = 10.0\n"),
               ConfigError);
  EXPECT_THROW(parse_calibration("[lidar\n"), ConfigError);
  EXPECT_THROW(load_calibration("/nonexistent/calib.toml"), ConfigError);
}

TEST(PipelineConfig, DefaultsAndOverrides) {
  const PipelineConfig d = parse_pipeline_config("", ".");
  EXPECT_EQ(d.k, 5u);
  EXPECT_DOUBLE_EQ(d.verification.epsilon, 0.4);
  EXPECT_EQ(d.verification.min_clique_size, 4u);
  EXPECT_EQ(d.lidar.rows(), 16u);
  EXPECT_NEAR(d.segmentation.theta_seg, deg2rad(10.0), 1e-15);

  const PipelineConfig c = parse_pipeline_config(R"(
seed = 42
[segmentation]
theta_seg_deg = 12.5
remove_ground = false
[matching]
k = 7
[verification]
epsilon = 0.3
min_clique_size = 5
[icp]
max_iter = 10
tol = 0.001
[map]
dedup = false
)",
                                                 ".");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_NEAR(c.segmentation.theta_seg, deg2rad(12.5), 1e-15);
  EXPECT_FALSE(c.segmentation.remove_ground);
  EXPECT_EQ(c.k, 7u);
  EXPECT_DOUBLE_EQ(c.verification.epsilon, 0.3);
  EXPECT_EQ(c.verification.min_clique_size, 5u);
  EXPECT_EQ(c.icp.max_iter, 10u);
  EXPECT_FALSE(c.map.dedup);
}

TEST(PipelineConfig, Invalid) {
  EXPECT_THROW(parse_pipeline_config("[matching]\nk = 0\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[matching]\nkk = 3\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[verification]\nmin_clique_size = 2\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[verification]\nepsilon = -1.0\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[descriptor]\nbackend = \"magic\"\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[descriptor]\nbackend = \"embedding-file\"\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[segmentation]\nsensor_height = \"high\"\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("[dataset]\nscans = \"no/such/dir\"\n", "."), ConfigError);
  EXPECT_THROW(parse_pipeline_config("calibration = \"missing.toml\"\n", "."), ConfigError);
  EXPECT_THROW(load_pipeline_config("/nonexistent/pipeline.toml"), ConfigError);
}

TEST(PipelineConfig, ReferencedFilesResolveAgainstConfigDir) {
  const fs::path dir = fixtures::temp_dir("config_paths");
  write_text_file(dir / "calib.toml", kCalib);
  fs::create_directories(dir / "velodyne");
  write_text_file(dir / "pipeline.toml",
                  "calibration = \"calib.toml\"\n[dataset]\nscans = \"velodyne\"\ntime_begin = 1.5\n");
  const PipelineConfig c = load_pipeline_config(dir / "pipeline.toml");
  ASSERT_TRUE(c.camera);
  EXPECT_DOUBLE_EQ(c.camera->fy, 110.0);
  EXPECT_EQ(c.dataset.scans, dir / "velodyne");
  EXPECT_DOUBLE_EQ(*c.dataset.time_begin, 1.5);
}

TEST(PipelineConfig, InlineSensorsAndFormatRoundTrip) {
  PipelineConfig c = parse_pipeline_config(R"(
threads = 3
[lidar]
beam_elevations = [2.0, 0.0, -2.0, -4.0]
azimuth_columns = 360
min_range = 1.0
max_range = 50.0
[source_lidar]
beam_elevations = [2.0, 1.0, 0.0, -1.0, -2.0, -3.0, -4.0]
azimuth_columns = 360
min_range = 1.0
max_range = 50.0
)",
                                           ".");
  EXPECT_EQ(c.lidar.rows(), 4u);
  ASSERT_TRUE(c.source_lidar);
  EXPECT_EQ(c.source_lidar->rows(), 7u);
  EXPECT_EQ(c.threads, 3u);

  c.k = 9;
  c.evaluation.iou_threshold = 0.25;
  const PipelineConfig back = parse_pipeline_config(format_pipeline_config(c), ".");
  EXPECT_EQ(back.k, 9u);
  EXPECT_DOUBLE_EQ(back.evaluation.iou_threshold, 0.25);
  EXPECT_EQ(back.lidar.rows(), 4u);
  EXPECT_EQ(back.source_lidar->rows(), 7u);
  EXPECT_EQ(back.threads, 3u);
  EXPECT_NEAR(back.segmentation.tau_ground, c.segmentation.tau_ground, 1e-15);
}
