#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oneshot {

using Point3 = Eigen::Vector3d;
using Points3 = std::vector<Point3>;

/// Rigid transform. Rotation is kept as an orthonormal matrix; quaternions
/// are only accepted at I/O boundaries and normalized on construction.
class SE3 {
 public:
  SE3() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  SE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static SE3 identity() { return {}; }
  static SE3 from_translation(const Eigen::Vector3d& t) { return {Eigen::Matrix3d::Identity(), t}; }
  static SE3 from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);
  /// Rotation about +z by `yaw` radians followed by translation `t`.
  static SE3 from_yaw(double yaw, const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
  /// Z-Y-X (yaw, pitch, roll) Euler angles.
  static SE3 from_rpy(double roll, double pitch, double yaw, const Eigen::Vector3d& t);
  /// Top 3x4 block of a homogeneous matrix; the rotation is re-orthonormalized
  /// via SVD so that slightly noisy text poses still satisfy the invariants.
  static SE3 from_matrix(const Eigen::Matrix4d& m);
  /// Exponential map of a twist (rho, phi): translation part then rotation
  /// vector.
  static SE3 exp(const Eigen::Matrix<double, 6, 1>& twist);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  SE3 inverse() const;
  Eigen::Matrix4d matrix() const;
  Point3 operator*(const Point3& p) const { return rotation_ * p + translation_; }
  SE3 operator*(const SE3& other) const;

  /// Rotation angle in radians (geodesic distance to identity).
  double rotation_angle() const;
  /// Heading of the rotated x-axis in the horizontal plane.
  double yaw() const;

  /// Orthonormality and unit determinant within `tol`.
  bool is_valid(double tol = 1e-9) const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Result applies `b` first, then `a`.
SE3 compose(const SE3& a, const SE3& b);
Point3 apply(const SE3& t, const Point3& p);
SE3 inverse(const SE3& t);

/// Pinhole model without distortion. `T_cam_lidar` maps LiDAR-frame points
/// into the camera frame (z forward).
struct PinholeCamera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  SE3 T_cam_lidar;

  void validate() const;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Points with camera depth at or below this are rejected as behind the
/// image plane.
inline constexpr double kDepthEpsilon = 1e-6;

/// Empty optional means out of view.
std::optional<Pixel> project_to_image(const PinholeCamera& cam, const Point3& p_lidar);

/// Rotating multi-beam LiDAR layout.
struct LidarIntrinsics {
  /// Radians, strictly decreasing (row 0 is the top beam).
  std::vector<double> beam_elevations;
  int azimuth_columns = 0;
  double min_range = 0.0;
  double max_range = 0.0;

  std::size_t rows() const { return beam_elevations.size(); }
  void validate() const;

  /// Azimuth angle (atan2(y, x) convention) of a column center.
  double column_azimuth(int col) const;
  /// Horizontal angular step between two adjacent columns.
  double azimuth_step() const;
};

struct RangeCell {
  int row = 0;
  int col = 0;
};

/// Cell of the range image hit by `p`, or empty when the point is outside
/// the range gates or farther than half the local beam spacing from every
/// beam.
std::optional<RangeCell> spherical_project(const LidarIntrinsics& intr, const Point3& p);

/// Index of the beam closest in elevation to `elevation`. Ties go to the lower
/// beam (larger row).
std::size_t nearest_beam(std::span<const double> elevations, double elevation);

double deg2rad(double deg);
double rad2deg(double rad);

/// Beams spaced uniformly from `top_deg` down to `bottom_deg` (inclusive).
LidarIntrinsics make_uniform_lidar(int beams, double top_deg, double bottom_deg, int azimuth_columns,
                                   double min_range, double max_range);
/// VLP-16 like layout: +15 deg to -15 deg in 2 deg steps.
LidarIntrinsics vlp16_intrinsics(int azimuth_columns = 1800, double min_range = 0.5,
                                 double max_range = 100.0);

}  // namespace oneshot
