#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "oneshot/descriptor.hpp"

namespace oneshot {

/// 8-bit interleaved image (1 = gray, 3 = RGB, 4 = RGBA).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(int u, int v) { return &pixels[(static_cast<std::size_t>(v) * width + u) * channels]; }
  const std::uint8_t* at(int u, int v) const {
    return &pixels[(static_cast<std::size_t>(v) * width + u) * channels];
  }
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// Crop with inclusive pixel bounds.
Image crop(const Image& image, const PixelBox& box);

}  // namespace oneshot
