#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oneshot/error.hpp"
#include "oneshot/geometry.hpp"
#include "scenes.hpp"

using namespace oneshot;

namespace {

std::size_t brute_nearest(const std::vector<double>& el, double e) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < el.size(); ++i) {
    if (std::abs(el[i] - e) <= std::abs(el[best] - e)) best = i;
  }
  return best;
}

}  // namespace

TEST(SE3, InverseAndCompose) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const SE3 a = fixtures::random_se3(rng);
    const SE3 b = fixtures::random_se3(rng);
    EXPECT_TRUE((a * a.inverse()).matrix().isIdentity(1e-12));
    EXPECT_TRUE(compose(a, b).matrix().isApprox(a.matrix() * b.matrix(), 1e-12));
    const Point3 p(1.0, -2.0, 3.0);
    EXPECT_TRUE((apply(compose(a, b), p) - a * (b * p)).norm() < 1e-12);
    EXPECT_TRUE(a.is_valid());
  }
}

TEST(SE3, FromMatrixReorthonormalizes) {
  Eigen::Matrix4d m = SE3::from_yaw(0.3, Point3(1, 2, 3)).matrix();
  m(0, 0) += 1e-7;
  const SE3 t = SE3::from_matrix(m);
  EXPECT_TRUE(t.is_valid());
  EXPECT_NEAR(t.yaw(), 0.3, 1e-6);
  EXPECT_EQ(t.translation(), Point3(1, 2, 3));
}

TEST(SE3, FromMatrixRejectsReflection) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(2, 2) = -1.0;
  EXPECT_THROW(SE3::from_matrix(m), DataError);
}

TEST(SE3, RpyAndExp) {
  const SE3 t = SE3::from_rpy(0.0, 0.0, 1.2, Point3::Zero());
  EXPECT_NEAR(t.yaw(), 1.2, 1e-12);
  EXPECT_NEAR(t.rotation_angle(), 1.2, 1e-12);
  Eigen::Matrix<double, 6, 1> twist;
  twist << 1, 2, 3, 0, 0, 0.5;
  const SE3 e = SE3::exp(twist);
  EXPECT_NEAR(e.yaw(), 0.5, 1e-12);
  EXPECT_TRUE(e.is_valid());
}

TEST(SphericalProject, SixteenBeamExample) {
  const LidarIntrinsics l = vlp16_intrinsics(1800);
  const auto cell = spherical_project(l, Point3(10, 0, 0));
  ASSERT_TRUE(cell);
  // 0 deg sits halfway between the +1 and -1 deg beams; the lower one wins.
  EXPECT_EQ(cell->row, 8);
  EXPECT_EQ(cell->col, 900);
}

TEST(SphericalProject, RowsColumnsAndGates) {
  const LidarIntrinsics l = vlp16_intrinsics(1800, 0.5, 100.0);
  auto at = [](double elev_deg, double az_deg, double r) {
    const double e = deg2rad(elev_deg);
    const double a = deg2rad(az_deg);
    return Point3(r * std::cos(e) * std::cos(a), r * std::cos(e) * std::sin(a), r * std::sin(e));
  };
  EXPECT_EQ(spherical_project(l, at(15.0, 10.0, 5.0))->row, 0);
  EXPECT_EQ(spherical_project(l, at(-15.0, 10.0, 5.0))->row, 15);
  EXPECT_EQ(spherical_project(l, at(1.8, 10.0, 5.0))->row, 7);
  EXPECT_EQ(spherical_project(l, at(15.9, 10.0, 5.0))->row, 0);
  EXPECT_FALSE(spherical_project(l, at(16.5, 10.0, 5.0)));
  EXPECT_FALSE(spherical_project(l, at(-16.5, 10.0, 5.0)));
  EXPECT_FALSE(spherical_project(l, at(0.0, 10.0, 0.2)));
  EXPECT_FALSE(spherical_project(l, at(0.0, 10.0, 150.0)));
  // Column 0 starts at azimuth +pi and columns advance clockwise.
  EXPECT_EQ(spherical_project(l, at(1.0, 179.95, 5.0))->col, 0);
  EXPECT_EQ(spherical_project(l, at(1.0, -179.95, 5.0))->col, 1799);
  EXPECT_EQ(spherical_project(l, at(1.0, 90.0, 5.0))->col, 450);
}

TEST(SphericalProject, ColumnCenterWithinHalfStep) {
  const LidarIntrinsics l = vlp16_intrinsics(900);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 2000; ++i) {
    const Point3 p(u(rng), u(rng), 0.01 * u(rng));
    const auto c = spherical_project(l, p);
    if (!c) continue;
    const double diff = std::remainder(std::atan2(p.y(), p.x()) - l.column_azimuth(c->col), 2.0 * std::numbers::pi);
    EXPECT_LE(std::abs(diff), 0.5 * l.azimuth_step() + 1e-12);
  }
}

TEST(NearestBeam, MatchesBruteForce) {
  std::vector<double> el;
  for (int i = 0; i < 64; ++i) el.push_back(deg2rad(2.0 - 0.4 * i - 0.01 * (i % 3)));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(deg2rad(-30.0), deg2rad(5.0));
  for (int i = 0; i < 5000; ++i) {
    const double e = u(rng);
    EXPECT_EQ(nearest_beam(el, e), brute_nearest(el, e));
  }
  for (std::size_t i = 0; i + 1 < el.size(); ++i) {
    EXPECT_EQ(nearest_beam(el, 0.5 * (el[i] + el[i + 1])), brute_nearest(el, 0.5 * (el[i] + el[i + 1])));
  }
}

TEST(LidarIntrinsics, Validation) {
  LidarIntrinsics l = vlp16_intrinsics();
  EXPECT_NO_THROW(l.validate());
  std::swap(l.beam_elevations[0], l.beam_elevations[1]);
  EXPECT_THROW(l.validate(), ConfigError);
  l = vlp16_intrinsics();
  l.min_range = 200.0;
  EXPECT_THROW(l.validate(), ConfigError);
}

TEST(PinholeCamera, Projection) {
  PinholeCamera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = 50.0;
  cam.cy = 40.0;
  cam.width = 100;
  cam.height = 80;
  // LiDAR x forward, y left, z up; camera z forward, x right, y down.
  Eigen::Matrix3d r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  cam.T_cam_lidar = SE3(r, Point3::Zero());
  const auto px = project_to_image(cam, Point3(10.0, 0.0, 0.0));
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->u, 50.0);
  EXPECT_DOUBLE_EQ(px->v, 40.0);
  const auto left = project_to_image(cam, Point3(10.0, 1.0, 0.5));
  ASSERT_TRUE(left);
  EXPECT_DOUBLE_EQ(left->u, 40.0);
  EXPECT_DOUBLE_EQ(left->v, 35.0);
  EXPECT_FALSE(project_to_image(cam, Point3(-10.0, 0.0, 0.0)));
  EXPECT_FALSE(project_to_image(cam, Point3(0.0, 0.0, 0.0)));
  EXPECT_FALSE(project_to_image(cam, Point3(1.0, 5.0, 0.0)));
}
