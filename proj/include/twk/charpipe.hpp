#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "twk/graph.hpp"

namespace twk {

struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 0 = black

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;  // 1 = foreground

  BinaryGrid() = default;
  BinaryGrid(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height && cells[static_cast<std::size_t>(y) * width + x];
  }
  void set(int x, int y, bool v) { cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryGrid&) const = default;
};

struct PipelineConfig {
  int threshold = 128;
  double spacing = 4.0;
  int min_component = 3;

  void validate() const;
};

std::vector<RasterImage> load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);
void save_idx_images(const std::vector<RasterImage>& images, const std::filesystem::path& path);
void save_idx_labels(const std::vector<int>& labels, const std::filesystem::path& path);

RasterImage parse_pgm(const std::string& bytes);
RasterImage load_pgm(const std::filesystem::path& path);
void save_pgm(const RasterImage& img, const std::filesystem::path& path);

/// Pixels >= threshold become foreground.
BinaryGrid binarize(const RasterImage& img, int threshold);

/// Guo-Hall two-subiteration thinning, run until nothing changes.
BinaryGrid thin(const BinaryGrid& grid);

/// Samples the skeleton at roughly uniform arc length. Endpoints and
/// junctions are always kept; samples consecutive along the skeleton are
/// joined. Positions are (column, row); attributes are positions relative to
/// the centre of the skeleton's bounding box.
PointCloudGraph extract_graph(const BinaryGrid& skeleton, const PipelineConfig& cfg);

/// binarize, thin, extract_graph.
PointCloudGraph image_to_graph(const RasterImage& img, const PipelineConfig& cfg);

/// Binary image downsampled by `factor` (a block is foreground when any
/// pixel in it is), flattened row-major into 0/1 values.
std::vector<double> binary_feature_vector(const RasterImage& img, int threshold, int factor);

}  // namespace twk
