#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oneshot/binary_io.hpp"
#include "oneshot/dataset.hpp"
#include "oneshot/error.hpp"
#include "scenes.hpp"

using namespace oneshot;
namespace fs = std::filesystem;

TEST(KittiScan, RoundTripIsBitExact) {
  const fs::path dir = fixtures::temp_dir("kitti_scan");
  std::mt19937 rng(3);
  std::vector<std::uint8_t> bytes(16 * 257);
  for (std::size_t i = 0; i < bytes.size(); i += 4) {
    // Random finite floats, including odd bit patterns in the mantissa.
    float f = std::uniform_real_distribution<float>(-80.0f, 80.0f)(rng);
    std::memcpy(&bytes[i], &f, 4);
  }
  write_binary_file(dir / "a.bin", bytes);
  const Scan s = read_kitti_scan(dir / "a.bin", 5);
  EXPECT_EQ(s.id, 5u);
  EXPECT_EQ(s.points.size(), 257u);
  EXPECT_FALSE(s.warning);
  write_kitti_scan(dir / "b.bin", s);
  EXPECT_EQ(read_binary_file(dir / "b.bin"), bytes);
}

TEST(KittiScan, MalformedLengthAndEmptyFile) {
  const fs::path dir = fixtures::temp_dir("kitti_bad");
  write_binary_file(dir / "bad.bin", std::vector<std::uint8_t>(30, 0));
  EXPECT_THROW(read_kitti_scan(dir / "bad.bin"), DataError);
  write_binary_file(dir / "empty.bin", {});
  const Scan s = read_kitti_scan(dir / "empty.bin");
  EXPECT_TRUE(s.points.empty());
  EXPECT_TRUE(s.warning);
  EXPECT_THROW(read_kitti_scan(dir / "missing.bin"), DataError);
}

TEST(KittiPoses, ParseComposeAndErrors) {
  const fs::path dir = fixtures::temp_dir("kitti_poses");
  write_text_file(dir / "poses.txt",
                  "1 0 0 1 0 1 0 2 0 0 1 3\n"
                  "\n"
                  "0 -1 0 4 1 0 0 5 0 0 1 6\n");
  const Trajectory t = read_kitti_poses(dir / "poses.txt");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].scan_id, 0u);
  EXPECT_EQ(t[1].scan_id, 1u);
  EXPECT_EQ(t[0].T_world_sensor.translation(), Point3(1, 2, 3));
  EXPECT_NEAR(t[1].T_world_sensor.yaw(), M_PI / 2, 1e-12);

  const SE3 tr = SE3::from_translation(Point3(0.5, 0, 0));
  const Trajectory lidar = read_kitti_poses(dir / "poses.txt", tr);
  EXPECT_TRUE((lidar[1].T_world_sensor.translation() - Point3(4, 5.5, 6)).norm() < 1e-12);

  write_text_file(dir / "bad.txt", "1 0 0 1 0 1 0 2 0 0 1 3\n1 0 0 1 0 1 0 2 0 0 1\n");
  try {
    read_kitti_poses(dir / "bad.txt");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.txt:2"), std::string::npos) << e.what();
  }
  write_text_file(dir / "nan.txt", "1 0 0 x 0 1 0 2 0 0 1 3\n");
  EXPECT_THROW(read_kitti_poses(dir / "nan.txt"), DataError);
}

TEST(KittiPoses, WriteReadRoundTrip) {
  const fs::path dir = fixtures::temp_dir("kitti_poses_rt");
  std::mt19937_64 rng(8);
  Trajectory t;
  for (std::uint32_t i = 0; i < 10; ++i) t.push_back({i, fixtures::random_se3(rng)});
  write_kitti_poses(dir / "p.txt", t);
  const Trajectory back = read_kitti_poses(dir / "p.txt");
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_TRUE(back[i].T_world_sensor.matrix().isApprox(t[i].T_world_sensor.matrix(), 1e-12));
  }
}

TEST(KittiCalib, TimesAndVeloToCam) {
  const fs::path dir = fixtures::temp_dir("kitti_calib");
  write_text_file(dir / "times.txt", "0.0\n0.1\n\n0.2\n");
  EXPECT_EQ(read_kitti_times(dir / "times.txt"), (std::vector<double>{0.0, 0.1, 0.2}));
  write_text_file(dir / "calib.txt", "P0: 1 2 3\nTr: 0 -1 0 0.1 0 0 -1 0.2 1 0 0 0.3\n");
  const SE3 tr = read_kitti_velo_to_cam(dir / "calib.txt");
  EXPECT_EQ(tr.translation(), Point3(0.1, 0.2, 0.3));
  EXPECT_TRUE((tr * Point3(1, 0, 0) - Point3(0.1, 0.2, 1.3)).norm() < 1e-12);
  write_text_file(dir / "none.txt", "P0: 1 2 3\n");
  EXPECT_THROW(read_kitti_velo_to_cam(dir / "none.txt"), DataError);
}

TEST(Trajectory, FindAndValidate) {
  Trajectory t{{2, SE3::from_translation(Point3(2, 0, 0))}, {5, SE3::from_translation(Point3(5, 0, 0))}};
  EXPECT_EQ(find_pose(t, 5)->translation().x(), 5.0);
  EXPECT_FALSE(find_pose(t, 3));
  EXPECT_NO_THROW(validate_trajectory(t));
  std::swap(t[0], t[1]);
  EXPECT_THROW(validate_trajectory(t), DataError);
  EXPECT_EQ(find_pose(t, 2)->translation().x(), 2.0);
}

TEST(SubsampleBeams, EveryFourthOfHalfDegreeLayout) {
  // 64 beams at 0.5 deg spacing from +15 deg; the 16 target beams at 2 deg
  // spacing coincide with every fourth source beam.
  const LidarIntrinsics src = make_uniform_lidar(64, 15.0, -16.5, 1800, 0.5, 100.0);
  const LidarIntrinsics dst = vlp16_intrinsics();
  const auto rows = select_source_beams(src, dst);
  ASSERT_EQ(rows.size(), 16u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i], 4 * i);
}

TEST(SubsampleBeams, UniformPlusMinusFifteenMatchesNearestOracle) {
  const LidarIntrinsics src = make_uniform_lidar(64, 15.0, -15.0, 1800, 0.5, 100.0);
  const LidarIntrinsics dst = vlp16_intrinsics();
  const auto rows = select_source_beams(src, dst);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double e = dst.beam_elevations[i];
    std::size_t best = 0;
    for (std::size_t j = 1; j < src.rows(); ++j) {
      if (std::abs(src.beam_elevations[j] - e) <= std::abs(src.beam_elevations[best] - e)) best = j;
    }
    EXPECT_EQ(rows[i], best) << "target beam " << i;
  }
  EXPECT_EQ(rows.front(), 0u);
  EXPECT_EQ(rows.back(), 63u);
}

TEST(SubsampleBeams, KeepsOnlySelectedRows) {
  const LidarIntrinsics src = make_uniform_lidar(64, 15.0, -16.5, 360, 0.5, 100.0);
  const LidarIntrinsics dst = vlp16_intrinsics(360);
  Scan scan;
  for (std::size_t r = 0; r < src.rows(); ++r) {
    for (int c = 0; c < src.azimuth_columns; ++c) {
      const double e = src.beam_elevations[r];
      const double a = src.column_azimuth(c);
      scan.points.emplace_back(10 * std::cos(e) * std::cos(a), 10 * std::cos(e) * std::sin(a), 10 * std::sin(e));
      scan.intensities.push_back(static_cast<float>(r));
    }
  }
  const Scan out = subsample_beams(scan, src, dst);
  EXPECT_EQ(out.points.size(), 16u * 360u);
  for (float i : out.intensities) EXPECT_EQ(static_cast<int>(i) % 4, 0);
}

TEST(SubsampleBeams, TargetOutsideSourceFovRejected) {
  const LidarIntrinsics src = make_uniform_lidar(32, 10.0, -10.0, 1800, 0.5, 100.0);
  EXPECT_THROW(select_source_beams(src, vlp16_intrinsics()), ConfigError);
}

TEST(ListScans, NumericStemsSorted) {
  const fs::path dir = fixtures::temp_dir("list_scans");
  for (const char* n : {"000010.bin", "000002.bin", "notes.bin", "000003.txt"}) write_binary_file(dir / n, {});
  const auto scans = list_kitti_scans(dir);
  ASSERT_EQ(scans.size(), 2u);
  EXPECT_EQ(scans[0].first, 2u);
  EXPECT_EQ(scans[1].first, 10u);
  EXPECT_THROW(list_kitti_scans(dir / "nope"), DataError);
}
