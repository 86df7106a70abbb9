#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "oneshot/descriptor.hpp"
#include "oneshot/error.hpp"
#include "oneshot/image.hpp"

namespace oneshot {

std::optional<ImagePatch> extract_patch(const Segment& seg, const PinholeCamera& cam, double margin,
                                        std::uint32_t image_id) {
  if (seg.points.empty()) return std::nullopt;
  double u_lo = std::numeric_limits<double>::infinity();
  double v_lo = u_lo;
  double u_hi = -u_lo;
  double v_hi = -u_lo;
  std::size_t visible = 0;
  for (const Point3& p : seg.points) {
    const auto px = project_to_image(cam, p);
    if (!px) continue;
    ++visible;
    u_lo = std::min(u_lo, px->u);
    u_hi = std::max(u_hi, px->u);
    v_lo = std::min(v_lo, px->v);
    v_hi = std::max(v_hi, px->v);
  }
  const double fraction = static_cast<double>(visible) / static_cast<double>(seg.points.size());
  if (visible == 0 || fraction < kMinVisibleFraction) return std::nullopt;

  const double du = margin * (u_hi - u_lo);
  const double dv = margin * (v_hi - v_lo);
  constexpr double kSnap = 1e-9;
  ImagePatch patch;
  patch.image_id = image_id;
  patch.visible_fraction = fraction;
  patch.bbox.u_min = std::clamp(static_cast<int>(std::floor(u_lo - du + kSnap)), 0, cam.width - 1);
  patch.bbox.v_min = std::clamp(static_cast<int>(std::floor(v_lo - dv + kSnap)), 0, cam.height - 1);
  patch.bbox.u_max = std::clamp(static_cast<int>(std::ceil(u_hi + du - kSnap)), 0, cam.width - 1);
  patch.bbox.v_max = std::clamp(static_cast<int>(std::ceil(v_hi + dv - kSnap)), 0, cam.height - 1);
  if (patch.bbox.u_min >= patch.bbox.u_max || patch.bbox.v_min >= patch.bbox.v_max) return std::nullopt;
  return patch;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  Image out;
  const bool has_alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool has_color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = has_color ? (has_alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (has_alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
  if (img.format == PNG_FORMAT_GA) img.format = PNG_FORMAT_RGBA;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = static_cast<int>(PNG_IMAGE_SAMPLE_CHANNELS(img.format));
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  switch (image.channels) {
    case 1: img.format = PNG_FORMAT_GRAY; break;
    case 3: img.format = PNG_FORMAT_RGB; break;
    case 4: img.format = PNG_FORMAT_RGBA; break;
    default: throw DataError("unsupported channel count for PNG output");
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  if (!png_image_write_to_stdio(&img, f.get(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot encode PNG '" + path.string() + "': " + img.message);
  }
}

Image crop(const Image& image, const PixelBox& box) {
  if (box.u_min < 0 || box.v_min < 0 || box.u_max >= image.width || box.v_max >= image.height ||
      box.u_min > box.u_max || box.v_min > box.v_max) {
    throw DataError("crop box outside the image");
  }
  Image out;
  out.width = box.u_max - box.u_min + 1;
  out.height = box.v_max - box.v_min + 1;
  out.channels = image.channels;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  for (int v = 0; v < out.height; ++v) {
    std::copy_n(image.at(box.u_min, box.v_min + v), static_cast<std::size_t>(out.width) * out.channels, out.at(0, v));
  }
  return out;
}

}  // namespace oneshot
