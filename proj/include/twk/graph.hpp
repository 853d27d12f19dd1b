#pragma once

#include <compare>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace twk {

struct Vertex {
  std::vector<double> position;
  std::vector<double> attribute;

  bool operator==(const Vertex&) const = default;
};

using Edge = std::pair<int, int>;

/// Undirected attributed point-cloud graph.
///
/// Vertices carry a position (dimension d, shared by all vertices) and an
/// attribute vector (dimension shared by all vertices). Edges are stored as
/// unordered pairs normalized to i < j, sorted; self-loops and duplicate
/// edges are rejected at construction. Instances are immutable.
class PointCloudGraph {
 public:
  PointCloudGraph() = default;
  PointCloudGraph(std::vector<Vertex> vertices, std::vector<Edge> edges);

  std::size_t size() const { return vertices_.size(); }
  bool empty() const { return vertices_.empty(); }
  std::size_t dim() const { return dim_; }
  std::size_t attr_dim() const { return attr_dim_; }

  const Vertex& vertex(std::size_t i) const { return vertices_[i]; }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const int> neighbors(std::size_t i) const { return adjacency_[i]; }
  bool has_edge(int i, int j) const;
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }

  /// Graph with vertex i moved to position perm[i].
  PointCloudGraph relabeled(std::span<const int> perm) const;

  bool operator==(const PointCloudGraph& other) const {
    return vertices_ == other.vertices_ && edges_ == other.edges_;
  }
  // Total order used to canonicalize argument order of symmetric kernels.
  std::partial_ordering operator<=>(const PointCloudGraph& other) const;

 private:
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::size_t dim_ = 0;
  std::size_t attr_dim_ = 0;
};

struct NeighborhoodRule {
  enum class Kind { EpsilonBall, KNearest, Explicit };
  Kind kind = Kind::EpsilonBall;
  double radius = 1.0;
  int k = 1;
  std::vector<Edge> edges;  // Explicit only

  static NeighborhoodRule epsilon_ball(double r) { return {Kind::EpsilonBall, r, 1, {}}; }
  static NeighborhoodRule k_nearest(int k) { return {Kind::KNearest, 0.0, k, {}}; }
  static NeighborhoodRule explicit_edges(std::vector<Edge> e) {
    return {Kind::Explicit, 0.0, 1, std::move(e)};
  }
};

/// Builds an undirected graph over `points`.
///
/// Epsilon-ball connects pairs at Euclidean distance <= r. k-nearest lets
/// every point select its k closest others (ties go to the lower index) and
/// symmetrizes by union. Attributes, when given, must have one entry per point.
PointCloudGraph build_neighborhood_graph(std::span<const std::vector<double>> points,
                                         const NeighborhoodRule& rule,
                                         std::span<const std::vector<double>> attributes = {});

PointCloudGraph load_graph(const std::filesystem::path& path);
void save_graph(const PointCloudGraph& graph, const std::filesystem::path& path);

PointCloudGraph parse_graph(const std::string& text);
std::string format_graph(const PointCloudGraph& graph);

}  // namespace twk
