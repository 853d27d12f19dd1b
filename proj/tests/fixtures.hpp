#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "twk/charpipe.hpp"

namespace fixture {

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twk-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void stroke(twk::RasterImage& img, double x0, double y0, double x1, double y1) {
  const int steps = 4 * static_cast<int>(std::hypot(x1 - x0, y1 - y0)) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.pixels[y * img.width + x] = 255;
      }
  }
}

/// 28x28 glyph for class 0 (a bar), 1 (a cross) or 2 (a triangle), jittered.
inline twk::RasterImage glyph(std::mt19937_64& rng, int cls) {
  twk::RasterImage img{28, 28, std::vector<std::uint8_t>(28 * 28, 0)};
  std::uniform_real_distribution<double> j(-1.5, 1.5);
  switch (cls % 3) {
    case 0:
      stroke(img, 14 + j(rng), 4 + j(rng), 14 + j(rng), 24 + j(rng));
      break;
    case 1:
      stroke(img, 5 + j(rng), 14 + j(rng), 23 + j(rng), 14 + j(rng));
      stroke(img, 14 + j(rng), 4 + j(rng), 14 + j(rng), 24 + j(rng));
      break;
    default:
      stroke(img, 5 + j(rng), 22 + j(rng), 14 + j(rng), 5 + j(rng));
      stroke(img, 14 + j(rng), 5 + j(rng), 23 + j(rng), 22 + j(rng));
      stroke(img, 23 + j(rng), 22 + j(rng), 5 + j(rng), 22 + j(rng));
  }
  return img;
}

}  // namespace fixture
