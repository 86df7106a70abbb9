#include "oneshot/calibration.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"
#include "toml_util.hpp"

namespace oneshot {

using detail::toml_integer;
using detail::toml_number;
using detail::toml_number_array;

Calibration parse_calibration(std::string_view toml_text, const std::string& source_name) {
  const toml::table tbl = detail::parse_toml(toml_text, source_name);
  Calibration calib;

  const auto lidar = tbl["lidar"];
  if (!lidar.as_table()) throw ConfigError(source_name + ": missing [lidar] section");
  for (double deg : toml_number_array(lidar["beam_elevations"], "lidar.beam_elevations")) {
    calib.lidar.beam_elevations.push_back(deg2rad(deg));
  }
  calib.lidar.azimuth_columns = static_cast<int>(toml_integer(lidar["azimuth_columns"], "lidar.azimuth_columns"));
  calib.lidar.min_range = toml_number(lidar["min_range"], "lidar.min_range");
  calib.lidar.max_range = toml_number(lidar["max_range"], "lidar.max_range");
  calib.lidar.validate();

  if (const auto cam = tbl["camera"]; cam.as_table()) {
    PinholeCamera c;
    c.fx = toml_number(cam["fx"], "camera.fx");
    c.fy = toml_number(cam["fy"], "camera.fy");
    c.cx = toml_number(cam["cx"], "camera.cx");
    c.cy = toml_number(cam["cy"], "camera.cy");
    c.width = static_cast<int>(toml_integer(cam["width"], "camera.width"));
    c.height = static_cast<int>(toml_integer(cam["height"], "camera.height"));
    if (cam["T_cam_lidar"]) {
      const auto values = toml_number_array(cam["T_cam_lidar"], "camera.T_cam_lidar");
      if (values.size() != 16) throw ConfigError("camera.T_cam_lidar needs 16 values (4x4 row-major)");
      Eigen::Matrix4d m;
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) m(r, k) = values[static_cast<std::size_t>(r * 4 + k)];
      try {
        c.T_cam_lidar = SE3::from_matrix(m);
      } catch (const DataError& e) {
        throw ConfigError(std::string("camera.T_cam_lidar: ") + e.what());
      }
    }
    c.validate();
    calib.camera = c;
  }
  return calib;
}

Calibration load_calibration(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_calibration(text, path.string());
}

std::string format_calibration(const Calibration& calib) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "[lidar]\nbeam_elevations = [";
  for (std::size_t i = 0; i < calib.lidar.beam_elevations.size(); ++i) {
    os << (i ? ", " : "") << rad2deg(calib.lidar.beam_elevations[i]);
  }
  os << "]\nazimuth_columns = " << calib.lidar.azimuth_columns << "\n";
  os << "min_range = " << calib.lidar.min_range << "\nmax_range = " << calib.lidar.max_range << "\n";
  if (calib.camera) {
    const PinholeCamera& c = *calib.camera;
    os << "\n[camera]\nfx = " << c.fx << "\nfy = " << c.fy << "\ncx = " << c.cx << "\ncy = " << c.cy
       << "\nwidth = " << c.width << "\nheight = " << c.height << "\nT_cam_lidar = [";
    const Eigen::Matrix4d m = c.T_cam_lidar.matrix();
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) os << ((r || k) ? ", " : "") << m(r, k);
    os << "]\n";
  }
  return os.str();
}

void save_calibration(const std::filesystem::path& path, const Calibration& calib) {
  write_text_file(path, format_calibration(calib));
}

}  // namespace oneshot
