#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "oneshot/geometry.hpp"

namespace oneshot {

/// Sensor setup read from a calibration TOML file:
///
///   [lidar]
///   beam_elevations = [15.0, 13.0, ...]   # degrees, top to bottom
///   azimuth_columns = 1800
///   min_range = 0.5
///   max_range = 100.0
///
///   [camera]                              # optional
///   fx = 100.0  fy = 100.0  cx = 50.0  cy = 50.0
///   width = 100  height = 100
///   T_cam_lidar = [16 numbers, row-major 4x4]
struct Calibration {
  LidarIntrinsics lidar;
  std::optional<PinholeCamera> camera;
};

Calibration parse_calibration(std::string_view toml_text, const std::string& source_name = "<string>");
Calibration load_calibration(const std::filesystem::path& path);
std::string format_calibration(const Calibration& calib);
void save_calibration(const std::filesystem::path& path, const Calibration& calib);

}  // namespace oneshot
