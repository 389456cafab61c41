#pragma once

#include <filesystem>
#include <vector>

#include "splatsim/geometry.hpp"

namespace splatsim {

// Linear RGB in [0, 1] plus coverage alpha, row-major from the top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Vec3> rgb;
  std::vector<double> alpha;

  Image() = default;
  Image(int w, int h)
      : width(w), height(h),
        rgb(static_cast<std::size_t>(w) * h, Vec3::Zero()),
        alpha(static_cast<std::size_t>(w) * h, 0.0) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  Vec3& at(int x, int y) { return rgb[index(x, y)]; }
  const Vec3& at(int x, int y) const { return rgb[index(x, y)]; }
};

// 8-bit RGBA PNG. Values are rounded after clamping to [0, 1].
void save_png(const Image& image, const std::filesystem::path& path);
// Accepts 8-bit gray, RGB and RGBA; alpha defaults to 1.
Image load_png(const std::filesystem::path& path);

}  // namespace splatsim
