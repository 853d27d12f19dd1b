#include "twk/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "text_util.hpp"
#include "twk/error.hpp"

namespace twk {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

PointCloudGraph::PointCloudGraph(std::vector<Vertex> vertices, std::vector<Edge> edges)
    : vertices_(std::move(vertices)) {
  if (!vertices_.empty()) {
    dim_ = vertices_.front().position.size();
    attr_dim_ = vertices_.front().attribute.size();
  }
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Vertex& v = vertices_[i];
    if (v.position.size() != dim_)
      throw InputError("vertex " + std::to_string(i) + " has position dimension " +
                       std::to_string(v.position.size()) + ", expected " + std::to_string(dim_));
    if (v.attribute.size() != attr_dim_)
      throw InputError("vertex " + std::to_string(i) + " has attribute dimension " +
                       std::to_string(v.attribute.size()) + ", expected " +
                       std::to_string(attr_dim_));
    if (!all_finite(v.position) || !all_finite(v.attribute))
      throw InputError("vertex " + std::to_string(i) + " has a non-finite coordinate");
  }
  const int n = static_cast<int>(vertices_.size());
  for (auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw InputError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                       ") has a vertex index out of range for " + std::to_string(n) +
                       " vertices");
    if (i == j) throw InputError("self-loop on vertex " + std::to_string(i));
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end())
    throw InputError("duplicate edge (" + std::to_string(dup->first) + "," +
                     std::to_string(dup->second) + ")");
  edges_ = std::move(edges);
  adjacency_.assign(vertices_.size(), {});
  for (auto [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& a : adjacency_) std::sort(a.begin(), a.end());
}

bool PointCloudGraph::has_edge(int i, int j) const {
  if (i < 0 || j < 0 || i >= static_cast<int>(size()) || j >= static_cast<int>(size()))
    return false;
  const auto& a = adjacency_[i];
  return std::binary_search(a.begin(), a.end(), j);
}

PointCloudGraph PointCloudGraph::relabeled(std::span<const int> perm) const {
  if (perm.size() != size()) throw InputError("relabeling has wrong length");
  std::vector<Vertex> vs(size());
  for (std::size_t i = 0; i < size(); ++i) vs.at(perm[i]) = vertices_[i];
  std::vector<Edge> es;
  es.reserve(edges_.size());
  for (auto [i, j] : edges_) es.emplace_back(perm[i], perm[j]);
  return PointCloudGraph(std::move(vs), std::move(es));
}

std::partial_ordering PointCloudGraph::operator<=>(const PointCloudGraph& other) const {
  if (auto c = size() <=> other.size(); c != 0) return c;
  if (auto c = edges_.size() <=> other.edges_.size(); c != 0) return c;
  if (auto c = edges_ <=> other.edges_; c != 0) return c;
  for (std::size_t i = 0; i < size(); ++i) {
    if (auto c = vertices_[i].position <=> other.vertices_[i].position; c != 0) return c;
    if (auto c = vertices_[i].attribute <=> other.vertices_[i].attribute; c != 0) return c;
  }
  return std::partial_ordering::equivalent;
}

PointCloudGraph build_neighborhood_graph(std::span<const std::vector<double>> points,
                                         const NeighborhoodRule& rule,
                                         std::span<const std::vector<double>> attributes) {
  if (points.empty()) throw InputError("build_neighborhood_graph: no points");
  if (!attributes.empty() && attributes.size() != points.size())
    throw InputError("build_neighborhood_graph: attribute count differs from point count");
  for (const auto& p : points)
    if (!all_finite(p)) throw InputError("build_neighborhood_graph: non-finite coordinate");

  const int n = static_cast<int>(points.size());
  std::vector<Edge> edges;
  switch (rule.kind) {
    case NeighborhoodRule::Kind::EpsilonBall: {
      if (!(rule.radius > 0)) throw InputError("epsilon-ball radius must be > 0");
      const double r2 = rule.radius * rule.radius;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (squared_distance(points[i], points[j]) <= r2) edges.emplace_back(i, j);
      break;
    }
    case NeighborhoodRule::Kind::KNearest: {
      if (rule.k < 1) throw InputError("k-nearest requires k >= 1");
      std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
      std::vector<int> order(n);
      for (int i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return squared_distance(points[i], points[a]) < squared_distance(points[i], points[b]);
        });
        int taken = 0;
        for (int j : order) {
          if (taken == rule.k) break;
          if (j == i) continue;
          adj[i][j] = adj[j][i] = true;
          ++taken;
        }
      }
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (adj[i][j]) edges.emplace_back(i, j);
      break;
    }
    case NeighborhoodRule::Kind::Explicit:
      edges = rule.edges;
      break;
  }

  std::vector<Vertex> vs(n);
  for (int i = 0; i < n; ++i) {
    vs[i].position = points[i];
    if (!attributes.empty()) vs[i].attribute = attributes[i];
  }
  return PointCloudGraph(std::move(vs), std::move(edges));
}

std::string format_graph(const PointCloudGraph& g) {
  std::string out = "pcg 1 " + std::to_string(g.size()) + " " + std::to_string(g.edges().size()) +
                    " " + std::to_string(g.dim()) + " " + std::to_string(g.attr_dim()) + "\n";
  for (const auto& v : g.vertices()) {
    out += "v";
    for (double x : v.position) out += " " + detail::fmt17(x);
    for (double x : v.attribute) out += " " + detail::fmt17(x);
    out += "\n";
  }
  for (auto [i, j] : g.edges()) out += "e " + std::to_string(i) + " " + std::to_string(j) + "\n";
  return out;
}

PointCloudGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::split_ws(line).empty()) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& msg) -> InputError {
    return InputError("graph file line " + std::to_string(lineno) + ": " + msg);
  };

  if (!next_line()) throw InputError("graph file is empty");
  auto head = detail::split_ws(line);
  if (head.size() != 6 || head[0] != "pcg" || head[1] != "1")
    throw fail("expected header 'pcg 1 <n_vertices> <n_edges> <d> <attr_dim>'");
  const long long n = detail::parse_int(head[2], "vertex count");
  const long long m = detail::parse_int(head[3], "edge count");
  const long long d = detail::parse_int(head[4], "position dimension");
  const long long a = detail::parse_int(head[5], "attribute dimension");
  if (n < 0 || m < 0 || d < 0 || a < 0) throw fail("negative count in header");

  std::vector<Vertex> vs(n);
  for (long long i = 0; i < n; ++i) {
    if (!next_line()) throw fail("expected " + std::to_string(n) + " vertex lines");
    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0] != "v") throw fail("expected vertex line");
    if (static_cast<long long>(tok.size()) != 1 + d + a)
      throw fail("vertex line has " + std::to_string(tok.size() - 1) + " values, expected " +
                 std::to_string(d + a));
    for (long long k = 0; k < d; ++k) vs[i].position.push_back(detail::parse_double(tok[1 + k], "coordinate"));
    for (long long k = 0; k < a; ++k)
      vs[i].attribute.push_back(detail::parse_double(tok[1 + d + k], "attribute"));
  }
  std::vector<Edge> es;
  for (long long e = 0; e < m; ++e) {
    if (!next_line()) throw fail("expected " + std::to_string(m) + " edge lines");
    auto tok = detail::split_ws(line);
    if (tok.size() != 3 || tok[0] != "e") throw fail("expected 'e <i> <j>'");
    long long i = detail::parse_int(tok[1], "edge index");
    long long j = detail::parse_int(tok[2], "edge index");
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw fail("edge index out of range: (" + std::to_string(i) + "," + std::to_string(j) + ")");
    if (i == j) throw fail("self-loop on vertex " + std::to_string(i));
    if (i > j) throw fail("edge indices must satisfy i < j");
    es.emplace_back(static_cast<int>(i), static_cast<int>(j));
  }
  if (next_line()) throw fail("trailing content after edges");
  return PointCloudGraph(std::move(vs), std::move(es));
}

PointCloudGraph load_graph(const std::filesystem::path& path) {
  try {
    return parse_graph(detail::read_file(path.string()));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void save_graph(const PointCloudGraph& graph, const std::filesystem::path& path) {
  detail::write_file(path.string(), format_graph(graph));
}

}  // namespace twk
