#include "oneshot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "oneshot/error.hpp"

namespace oneshot {

SE3 SE3::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  return {q.normalized().toRotationMatrix(), t};
}

SE3 SE3::from_yaw(double yaw, const Eigen::Vector3d& t) {
  return {Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(), t};
}

SE3 SE3::from_rpy(double roll, double pitch, double yaw, const Eigen::Vector3d& t) {
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                             Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                                .toRotationMatrix();
  return {r, t};
}

SE3 SE3::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d ortho = svd.matrixU() * svd.matrixV().transpose();
  if (ortho.determinant() < 0.0) {
    throw DataError("pose matrix has a reflection (negative determinant)");
  }
  // Keep exact input when it is already orthonormal to the last bit we care
  // about; re-orthonormalizing identity-like inputs would perturb them.
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12 &&
      std::abs(r.determinant() - 1.0) < 1e-12) {
    ortho = r;
  }
  return {ortho, m.topRightCorner<3, 1>()};
}

SE3 SE3::exp(const Eigen::Matrix<double, 6, 1>& twist) {
  const Eigen::Vector3d rho = twist.head<3>();
  const Eigen::Vector3d phi = twist.tail<3>();
  const double angle = phi.norm();
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  if (angle > 0.0) {
    r = Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
  }
  return {r, rho};
}

SE3 SE3::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

Eigen::Matrix4d SE3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

SE3 SE3::operator*(const SE3& other) const {
  return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

double SE3::rotation_angle() const {
  const double c = std::clamp((rotation_.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

double SE3::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

bool SE3::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_ * rotation_.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

SE3 compose(const SE3& a, const SE3& b) { return a * b; }
Point3 apply(const SE3& t, const Point3& p) { return t * p; }
SE3 inverse(const SE3& t) { return t.inverse(); }

void PinholeCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (!T_cam_lidar.is_valid(1e-6)) throw ConfigError("camera extrinsic is not a rigid transform");
}

std::optional<Pixel> project_to_image(const PinholeCamera& cam, const Point3& p_lidar) {
  const Point3 p = cam.T_cam_lidar * p_lidar;
  if (p.z() <= kDepthEpsilon) return std::nullopt;
  const Pixel px{cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
  if (px.u < 0.0 || px.v < 0.0 || px.u >= cam.width || px.v >= cam.height) return std::nullopt;
  return px;
}

void LidarIntrinsics::validate() const {
  if (beam_elevations.empty()) throw ConfigError("lidar needs at least one beam");
  for (std::size_t i = 1; i < beam_elevations.size(); ++i) {
    if (!(beam_elevations[i] < beam_elevations[i - 1])) {
      throw ConfigError("beam elevations must be strictly decreasing (top to bottom)");
    }
  }
  if (azimuth_columns < 8) throw ConfigError("azimuth_columns must be >= 8");
  if (!(min_range > 0.0) || !(min_range < max_range)) {
    throw ConfigError("lidar range gates must satisfy 0 < min_range < max_range");
  }
}

double LidarIntrinsics::azimuth_step() const { return 2.0 * std::numbers::pi / azimuth_columns; }

double LidarIntrinsics::column_azimuth(int col) const {
  return std::numbers::pi - (col + 0.5) * azimuth_step();
}

std::size_t nearest_beam(std::span<const double> elevations, double elevation) {
  std::size_t best = 0;
  double best_diff = std::abs(elevations[0] - elevation);
  for (std::size_t i = 1; i < elevations.size(); ++i) {
    const double diff = std::abs(elevations[i] - elevation);
    if (diff <= best_diff) {
      best = i;
      best_diff = diff;
    }
  }
  return best;
}

std::optional<RangeCell> spherical_project(const LidarIntrinsics& intr, const Point3& p) {
  const double r = p.norm();
  if (!(r >= intr.min_range) || r > intr.max_range) return std::nullopt;
  const double elevation = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  const auto& elev = intr.beam_elevations;
  const std::size_t row = nearest_beam(elev, elevation);

  // Spacing toward the side the point lies on; at the outermost beams the
  // only available neighbor gap is used. A single-beam sensor falls back to
  // the horizontal resolution.
  double spacing;
  if (elev.size() == 1) {
    spacing = intr.azimuth_step();
  } else if (elevation >= elev[row]) {
    spacing = row > 0 ? elev[row - 1] - elev[row] : elev[row] - elev[row + 1];
  } else {
    spacing = row + 1 < elev.size() ? elev[row] - elev[row + 1] : elev[row - 1] - elev[row];
  }
  if (std::abs(elevation - elev[row]) > 0.5 * spacing) return std::nullopt;

  const double turns = (std::numbers::pi - std::atan2(p.y(), p.x())) / (2.0 * std::numbers::pi);
  int col = static_cast<int>(std::floor(turns * intr.azimuth_columns)) % intr.azimuth_columns;
  if (col < 0) col += intr.azimuth_columns;
  return RangeCell{static_cast<int>(row), col};
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

LidarIntrinsics make_uniform_lidar(int beams, double top_deg, double bottom_deg, int azimuth_columns,
                                   double min_range, double max_range) {
  LidarIntrinsics intr;
  intr.azimuth_columns = azimuth_columns;
  intr.min_range = min_range;
  intr.max_range = max_range;
  intr.beam_elevations.reserve(static_cast<std::size_t>(beams));
  for (int i = 0; i < beams; ++i) {
    const double deg = beams == 1 ? top_deg : top_deg + (bottom_deg - top_deg) * i / (beams - 1);
    intr.beam_elevations.push_back(deg2rad(deg));
  }
  intr.validate();
  return intr;
}

LidarIntrinsics vlp16_intrinsics(int azimuth_columns, double min_range, double max_range) {
  return make_uniform_lidar(16, 15.0, -15.0, azimuth_columns, min_range, max_range);
}

}  // namespace oneshot
