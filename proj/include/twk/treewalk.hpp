#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "twk/covkernels.hpp"
#include "twk/graph.hpp"

namespace twk {

struct WalkParams {
  int alpha = 1;       // max arity
  int beta = 1;        // distinctness order
  int gamma = 1;       // max generations of a tree-walk
  double lambda = 1.0; // per-node penalization
  double nu = 0.1;     // per-leaf penalization

  void validate() const;
};

/// Rooted unordered tree on nodes {0, ..., n-1}.
///
/// Node 0 is the root and parent(i) < i for every other node, so any index
/// order is a valid top-down processing order. Two structures are equivalent
/// (isomorphic as rooted unordered trees) iff their canonical codes match.
class TreeStructure {
 public:
  TreeStructure() : TreeStructure(std::vector<int>{-1}) {}
  explicit TreeStructure(std::vector<int> parent);

  /// Parses a canonical code ("()" is a single node, "(()())" a root with
  /// two leaf children). The result is laid out in preorder with children in
  /// code order.
  static TreeStructure from_code(std::string_view code);
  static TreeStructure chain(int n);

  int size() const { return static_cast<int>(parent_.size()); }
  int parent(int i) const { return parent_[i]; }
  const std::vector<int>& parents() const { return parent_; }
  const std::vector<int>& children(int i) const { return children_[i]; }
  int depth(int i) const { return depth_[i]; }
  /// Number of levels (root alone = 1).
  int generations() const { return generations_; }
  /// Levels in the subtree of i, counting i.
  int subtree_generations(int i) const { return height_[i]; }
  int max_arity() const;
  int leaf_count() const;
  const std::string& canonical_code() const { return codes_[0]; }
  const std::string& subtree_code(int i) const { return codes_[i]; }
  /// Size of the automorphism group of the rooted unordered tree.
  double automorphism_count() const;

 private:
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> depth_;
  std::vector<int> height_;
  std::vector<std::string> codes_;
  int generations_ = 1;
};

bool tree_equivalent(const TreeStructure& a, const TreeStructure& b);

/// One representative per equivalence class of trees with at most `gamma`
/// levels and at most `alpha` children per node, sorted by canonical code.
std::vector<TreeStructure> enumerate_tree_structures(int alpha, int gamma);

/// lambda^|T| nu^leaves(T); a single node counts as one leaf.
double penalization(const TreeStructure& t, double lambda, double nu);

using Labelling = std::vector<int>;

/// All consistent labellings of `t` by vertices of `g` in which every node's
/// label and the labels of its descendants up to `beta` levels below are
/// pairwise distinct.
std::vector<Labelling> enumerate_labellings(const TreeStructure& t, const PointCloudGraph& g, int beta);

/// Labellings for the reduced (chain-window) pattern set: each label differs
/// from the labels of its ancestors up to `beta` levels above, and siblings
/// carry distinct labels.
std::vector<Labelling> enumerate_labellings_reduced(const TreeStructure& t, const PointCloudGraph& g,
                                                    int beta);

bool is_valid_labelling(const TreeStructure& t, const PointCloudGraph& g, const Labelling& l, int beta);

/// Rooted subtree of a graph with pairwise distinct vertices.
///
/// Nodes are in breadth-first layout: node 0 is the root, parent(i) < i, and
/// the children of a node are contiguous. An ordered pattern distinguishes the
/// order of siblings; an unordered one is stored in a canonical layout and
/// identified up to sibling permutation.
struct SubtreePattern {
  std::vector<int> vertex;
  std::vector<int> parent;
  bool ordered = false;

  int size() const { return static_cast<int>(vertex.size()); }
  int root() const { return vertex.front(); }
  int generations() const;
  TreeStructure structure() const;
  /// Canonical code of the unordered shape.
  std::string shape_code() const;
  /// Identity of the labelled pattern (ordered or unordered per `ordered`).
  std::string key() const;
  /// Key of the unordered labelled pattern, whatever `ordered` says.
  std::string unordered_key() const;
};

bool tree_equivalent(const SubtreePattern& a, const SubtreePattern& b);

/// Shape code that keeps sibling order ("(()(()))" differs from "((())())").
std::string ordered_shape_code(const SubtreePattern& p);

/// Subtree of `p` hanging from `node`, keeping nodes at most `max_depth` levels below it, in
/// breadth-first layout with sibling order kept.
SubtreePattern subpattern(const SubtreePattern& p, int node, int max_depth);

struct PatternOptions {
  bool ordered = false;
  std::size_t cap = 100000;
};

/// All distinct-vertex rooted subtrees of `g` with at most `beta` levels and
/// arity at most `alpha`, including shallower ones. Throws GuardExceeded once
/// the count passes `options.cap`.
std::vector<SubtreePattern> build_patterns(const PointCloudGraph& g, int alpha, int beta,
                                           PatternOptions options = {});

/// Directed "extends one level further" graph over a pattern set.
struct AugmentedGraph {
  std::vector<SubtreePattern> patterns;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> out;  // out-neighbours per pattern
  std::vector<std::vector<int>> in;
};

/// Edge R0 -> R1 when the root of R1 is a child of the root of R0 (any graph
/// neighbour when beta = 1), the top beta-1 levels of R1 coincide with the
/// subtree of R0 hanging from that child, and the vertices on the last level
/// of R1 are not in R0.
AugmentedGraph build_augmented_graph(std::vector<SubtreePattern> patterns, const PointCloudGraph& g,
                                     int alpha, int beta);

/// Labelled pattern formed by the nodes of `t` within beta-1 levels of the root.
SubtreePattern root_pattern(const TreeStructure& t, const Labelling& labels, int beta);

/// Graphical model whose maximal cliques are the families of depth beta
/// (a node and all its descendants up to beta levels below); the junction
/// tree is rooted at the family of the root and follows the tree downwards.
DecomposableModel build_model_for_tree(const TreeStructure& t, int beta);

/// Model for the reduced pattern set: clique of an internal node u is u, its
/// ancestors up to beta-1 levels above and its children.
DecomposableModel build_window_model(const TreeStructure& t, int beta);

}  // namespace twk
