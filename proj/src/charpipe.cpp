#include "twk/charpipe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "text_util.hpp"
#include "twk/error.hpp"

namespace twk {

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
}

void PipelineConfig::validate() const {
  if (threshold < 1 || threshold > 255) throw InputError("threshold must be in [1,255]");
  if (!(spacing >= 1)) throw InputError("spacing must be >= 1");
  if (min_component < 1) throw InputError("minimum component size must be >= 1");
}

// ---------------------------------------------------------------------------
// IDX and PGM

namespace {

std::uint32_t read_be32(const std::string& b, std::size_t off) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3]));
}

void put_be32(std::string& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<char>((v >> s) & 0xff));
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

void require_size(const std::string& bytes, std::size_t expected, const std::filesystem::path& path) {
  if (bytes.size() < expected)
    throw InputError(path.string() + ": truncated IDX file, expected " + std::to_string(expected) +
                     " bytes, got " + std::to_string(bytes.size()));
}

}  // namespace

std::vector<RasterImage> load_idx_images(const std::filesystem::path& path) {
  std::string b = read_bytes(path);
  require_size(b, 4, path);
  if (read_be32(b, 0) != 0x803) throw InputError(path.string() + ": bad magic number for IDX images");
  require_size(b, 16, path);
  const std::size_t n = read_be32(b, 4), rows = read_be32(b, 8), cols = read_be32(b, 12);
  require_size(b, 16 + n * rows * cols, path);
  std::vector<RasterImage> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].width = static_cast<int>(cols);
    out[i].height = static_cast<int>(rows);
    auto first = b.begin() + static_cast<std::ptrdiff_t>(16 + i * rows * cols);
    out[i].pixels.assign(first, first + static_cast<std::ptrdiff_t>(rows * cols));
  }
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  std::string b = read_bytes(path);
  require_size(b, 4, path);
  if (read_be32(b, 0) != 0x801) throw InputError(path.string() + ": bad magic number for IDX labels");
  require_size(b, 8, path);
  const std::size_t n = read_be32(b, 4);
  require_size(b, 8 + n, path);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<unsigned char>(b[8 + i]);
  return out;
}

void save_idx_images(const std::vector<RasterImage>& images, const std::filesystem::path& path) {
  std::string b;
  put_be32(b, 0x803);
  put_be32(b, static_cast<std::uint32_t>(images.size()));
  const int h = images.empty() ? 0 : images[0].height, w = images.empty() ? 0 : images[0].width;
  put_be32(b, h);
  put_be32(b, w);
  for (const auto& img : images) {
    if (img.width != w || img.height != h) throw InputError("IDX images must share dimensions");
    b.append(img.pixels.begin(), img.pixels.end());
  }
  write_bytes(path, b);
}

void save_idx_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::string b;
  put_be32(b, 0x801);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw InputError("IDX labels must fit in a byte");
    b.push_back(static_cast<char>(l));
  }
  write_bytes(path, b);
}

RasterImage parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw InputError("not a binary PGM (P5) file");
  RasterImage img;
  img.width = static_cast<int>(detail::parse_int(token(), "PGM width"));
  img.height = static_cast<int>(detail::parse_int(token(), "PGM height"));
  const long long maxval = detail::parse_int(token(), "PGM maxval");
  if (img.width < 0 || img.height < 0) throw InputError("negative PGM dimensions");
  if (maxval < 1 || maxval > 255) throw InputError("only 8-bit PGM files are supported");
  ++pos;  // single whitespace before the raster
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() < pos + need)
    throw InputError("truncated PGM raster, expected " + std::to_string(need) + " bytes, got " +
                     std::to_string(bytes.size() > pos ? bytes.size() - pos : 0));
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    unsigned v = static_cast<unsigned char>(bytes[pos + i]);
    img.pixels[i] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  }
  return img;
}

RasterImage load_pgm(const std::filesystem::path& path) {
  try {
    return parse_pgm(read_bytes(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void save_pgm(const RasterImage& img, const std::filesystem::path& path) {
  std::string b = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  b.append(img.pixels.begin(), img.pixels.end());
  write_bytes(path, b);
}

// ---------------------------------------------------------------------------
// Binarization and thinning

BinaryGrid binarize(const RasterImage& img, int threshold) {
  BinaryGrid g(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) g.cells[i] = img.pixels[i] >= threshold ? 1 : 0;
  return g;
}

BinaryGrid thin(const BinaryGrid& grid) {
  BinaryGrid g = grid;
  std::vector<std::pair<int, int>> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int iter = 0; iter < 2; ++iter) {
      doomed.clear();
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
          if (!g.at(x, y)) continue;
          const int p2 = g.at(x, y - 1), p3 = g.at(x + 1, y - 1), p4 = g.at(x + 1, y),
                    p5 = g.at(x + 1, y + 1), p6 = g.at(x, y + 1), p7 = g.at(x - 1, y + 1),
                    p8 = g.at(x - 1, y), p9 = g.at(x - 1, y - 1);
          const int c = ((!p2) & (p3 | p4)) + ((!p4) & (p5 | p6)) + ((!p6) & (p7 | p8)) + ((!p8) & (p9 | p2));
          const int n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
          const int n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
          const int n = std::min(n1, n2);
          const int m = iter == 0 ? ((p6 | p7 | (!p9)) & p8) : ((p2 | p3 | (!p5)) & p4);
          if (c == 1 && n >= 2 && n <= 3 && m == 0) doomed.emplace_back(x, y);
        }
      for (auto [x, y] : doomed) g.set(x, y, false);
      changed = changed || !doomed.empty();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Graph extraction

namespace {

constexpr std::array<std::pair<int, int>, 8> kNeighbours{
    {{0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

struct PixelGraph {
  int width = 0;
  std::vector<int> pixels;                // linear index, raster order
  std::map<int, int> index;               // linear index -> node
  std::vector<std::vector<int>> adj;      // node -> nodes
};

// 8-adjacency without diagonal steps that cut the corner of a 4-connected
// path, so an L-shaped run of three pixels is a chain rather than a triangle.
PixelGraph pixel_graph(const BinaryGrid& g) {
  PixelGraph pg;
  pg.width = g.width;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (g.at(x, y)) {
        pg.index[y * g.width + x] = static_cast<int>(pg.pixels.size());
        pg.pixels.push_back(y * g.width + x);
      }
  pg.adj.assign(pg.pixels.size(), {});
  for (std::size_t i = 0; i < pg.pixels.size(); ++i) {
    const int x = pg.pixels[i] % g.width, y = pg.pixels[i] / g.width;
    for (auto [dx, dy] : kNeighbours) {
      if (!g.at(x + dx, y + dy)) continue;
      if (dx != 0 && dy != 0 && (g.at(x + dx, y) || g.at(x, y + dy))) continue;
      pg.adj[i].push_back(pg.index.at((y + dy) * g.width + x + dx));
    }
  }
  return pg;
}

std::vector<int> components(const std::vector<std::vector<int>>& adj, int& count) {
  std::vector<int> comp(adj.size(), -1);
  count = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    if (comp[s] != -1) continue;
    std::vector<int> stack{static_cast<int>(s)};
    comp[s] = count;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v])
        if (comp[w] == -1) {
          comp[w] = count;
          stack.push_back(w);
        }
    }
    ++count;
  }
  return comp;
}

}  // namespace

PointCloudGraph extract_graph(const BinaryGrid& skeleton, const PipelineConfig& cfg) {
  cfg.validate();
  // Drop small 8-connected components (plain 8-adjacency, before pruning).
  BinaryGrid kept = skeleton;
  {
    PixelGraph full = pixel_graph(skeleton);
    std::vector<std::vector<int>> adj8(full.pixels.size());
    for (std::size_t i = 0; i < full.pixels.size(); ++i) {
      const int x = full.pixels[i] % skeleton.width, y = full.pixels[i] / skeleton.width;
      for (auto [dx, dy] : kNeighbours)
        if (skeleton.at(x + dx, y + dy)) adj8[i].push_back(full.index.at((y + dy) * skeleton.width + x + dx));
    }
    int nc = 0;
    auto comp = components(adj8, nc);
    std::vector<int> sizes(nc, 0);
    for (int c : comp) ++sizes[c];
    for (std::size_t i = 0; i < full.pixels.size(); ++i)
      if (sizes[comp[i]] < cfg.min_component)
        kept.set(full.pixels[i] % skeleton.width, full.pixels[i] / skeleton.width, false);
  }
  PixelGraph pg = pixel_graph(kept);
  const int n = static_cast<int>(pg.pixels.size());
  if (n == 0) throw EmptySkeleton("empty skeleton");

  std::vector<char> key(n, 0);
  for (int i = 0; i < n; ++i) key[i] = pg.adj[i].size() != 2;
  {
    int nc = 0;
    auto comp = components(pg.adj, nc);
    std::vector<char> has_key(nc, 0);
    for (int i = 0; i < n; ++i) has_key[comp[i]] |= key[i];
    for (int i = 0; i < n; ++i)
      if (!has_key[comp[i]]) {
        key[i] = 1;  // first raster pixel of a pure cycle
        has_key[comp[i]] = 1;
      }
  }

  auto step = [&](int a, int b) {
    const int dx = pg.pixels[a] % pg.width - pg.pixels[b] % pg.width;
    const int dy = pg.pixels[a] / pg.width - pg.pixels[b] / pg.width;
    return (dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0;
  };

  std::vector<char> retained(key);
  std::set<std::pair<int, int>> walked;  // directed pixel steps already covered
  std::set<std::pair<int, int>> edges;
  auto add_edge = [&](int a, int b) {
    if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
  };
  for (int k = 0; k < n; ++k) {
    if (!key[k]) continue;
    for (int first : pg.adj[k]) {
      if (walked.count({k, first})) continue;
      std::vector<int> path{k};
      int prev = k, cur = first;
      walked.emplace(k, first);
      walked.emplace(first, k);
      while (!key[cur]) {
        path.push_back(cur);
        int next = pg.adj[cur][0] == prev ? pg.adj[cur][1] : pg.adj[cur][0];
        walked.emplace(cur, next);
        walked.emplace(next, cur);
        prev = cur;
        cur = next;
      }
      path.push_back(cur);
      std::vector<int> samples{k};
      double run = 0.0;
      for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        run += step(path[i - 1], path[i]);
        if (run >= cfg.spacing) {
          samples.push_back(path[i]);
          run = 0.0;
        }
      }
      if (cur == k && samples.size() == 1 && path.size() > 2) samples.push_back(path[path.size() / 2]);
      samples.push_back(cur);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        retained[samples[i]] = 1;
        if (i) add_edge(samples[i - 1], samples[i]);
      }
    }
  }

  // Vertices in raster order.
  std::vector<int> vid(n, -1);
  std::vector<Vertex> vs;
  int minx = pg.width, maxx = -1, miny = kept.height, maxy = -1;
  for (int i = 0; i < n; ++i) {
    const int x = pg.pixels[i] % pg.width, y = pg.pixels[i] / pg.width;
    minx = std::min(minx, x);
    maxx = std::max(maxx, x);
    miny = std::min(miny, y);
    maxy = std::max(maxy, y);
  }
  const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
  for (int i = 0; i < n; ++i) {
    if (!retained[i]) continue;
    const double x = pg.pixels[i] % pg.width, y = pg.pixels[i] / pg.width;
    vid[i] = static_cast<int>(vs.size());
    vs.push_back({{x, y}, {x - cx, y - cy}});
  }
  std::vector<Edge> es;
  for (auto [a, b] : edges) es.emplace_back(vid[a], vid[b]);
  return PointCloudGraph(std::move(vs), std::move(es));
}

PointCloudGraph image_to_graph(const RasterImage& img, const PipelineConfig& cfg) {
  cfg.validate();
  return extract_graph(thin(binarize(img, cfg.threshold)), cfg);
}

std::vector<double> binary_feature_vector(const RasterImage& img, int threshold, int factor) {
  if (factor < 1) throw InputError("downsampling factor must be >= 1");
  const int w = (img.width + factor - 1) / factor, h = (img.height + factor - 1) / factor;
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y) >= threshold) out[static_cast<std::size_t>(y / factor) * w + x / factor] = 1.0;
  return out;
}

}  // namespace twk
