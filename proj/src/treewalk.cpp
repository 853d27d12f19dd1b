#include "twk/treewalk.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "twk/error.hpp"

namespace twk {

void WalkParams::validate() const {
  if (alpha < 1) throw InputError("alpha must be >= 1");
  if (beta < 1) throw InputError("beta must be >= 1");
  if (gamma < 1) throw InputError("gamma must be >= 1");
  if (!(lambda > 0)) throw InputError("lambda must be > 0");
  if (!(nu > 0)) throw InputError("nu must be > 0");
}

// ---------------------------------------------------------------------------
// TreeStructure

TreeStructure::TreeStructure(std::vector<int> parent) : parent_(std::move(parent)) {
  const int n = size();
  if (n == 0) throw InputError("tree structure needs at least one node");
  if (parent_[0] != -1) throw InputError("node 0 must be the root");
  for (int i = 1; i < n; ++i)
    if (parent_[i] < 0 || parent_[i] >= i)
      throw InputError("tree structure requires 0 <= parent(i) < i");
  children_.assign(n, {});
  depth_.assign(n, 0);
  for (int i = 1; i < n; ++i) {
    children_[parent_[i]].push_back(i);
    depth_[i] = depth_[parent_[i]] + 1;
  }
  height_.assign(n, 1);
  codes_.assign(n, {});
  for (int i = n - 1; i >= 0; --i) {
    std::vector<const std::string*> kids;
    for (int c : children_[i]) {
      height_[i] = std::max(height_[i], height_[c] + 1);
      kids.push_back(&codes_[c]);
    }
    std::sort(kids.begin(), kids.end(), [](auto* a, auto* b) { return *a < *b; });
    std::string code = "(";
    for (auto* k : kids) code += *k;
    code += ")";
    codes_[i] = std::move(code);
  }
  generations_ = height_[0];
}

TreeStructure TreeStructure::from_code(std::string_view code) {
  std::vector<int> parent;
  std::vector<int> stack;
  for (char ch : code) {
    if (ch == '(') {
      parent.push_back(stack.empty() ? -1 : stack.back());
      if (parent.size() > 1 && stack.empty()) throw InputError("tree code has more than one root");
      stack.push_back(static_cast<int>(parent.size()) - 1);
    } else if (ch == ')') {
      if (stack.empty()) throw InputError("unbalanced tree code");
      stack.pop_back();
    } else {
      throw InputError("invalid character in tree code");
    }
  }
  if (!stack.empty() || parent.empty()) throw InputError("unbalanced tree code");
  return TreeStructure(std::move(parent));
}

TreeStructure TreeStructure::chain(int n) {
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i - 1;
  return TreeStructure(std::move(parent));
}

int TreeStructure::max_arity() const {
  std::size_t a = 0;
  for (const auto& c : children_) a = std::max(a, c.size());
  return static_cast<int>(a);
}

int TreeStructure::leaf_count() const {
  return static_cast<int>(std::count_if(children_.begin(), children_.end(),
                                        [](const auto& c) { return c.empty(); }));
}

double TreeStructure::automorphism_count() const {
  double count = 1.0;
  for (int i = 0; i < size(); ++i) {
    std::map<std::string_view, int> groups;
    for (int c : children_[i]) ++groups[codes_[c]];
    for (auto [code, m] : groups)
      for (int k = 2; k <= m; ++k) count *= k;
  }
  return count;
}

bool tree_equivalent(const TreeStructure& a, const TreeStructure& b) {
  return a.canonical_code() == b.canonical_code();
}

std::vector<TreeStructure> enumerate_tree_structures(int alpha, int gamma) {
  if (alpha < 1 || gamma < 1) throw InputError("enumerate_tree_structures: alpha, gamma must be >= 1");
  std::vector<std::string> level{"()"};
  for (int g = 2; g <= gamma; ++g) {
    std::set<std::string> next;
    std::vector<int> pick;
    // multisets of size 0..alpha as nondecreasing index sequences
    std::function<void(int)> rec = [&](int from) {
      std::string code = "(";
      for (int i : pick) code += level[i];
      code += ")";
      next.insert(code);
      if (static_cast<int>(pick.size()) == alpha) return;
      for (int i = from; i < static_cast<int>(level.size()); ++i) {
        pick.push_back(i);
        rec(i);
        pick.pop_back();
      }
    };
    rec(0);
    level.assign(next.begin(), next.end());
  }
  std::vector<TreeStructure> out;
  out.reserve(level.size());
  for (const auto& code : level) out.push_back(TreeStructure::from_code(code));
  return out;
}

double penalization(const TreeStructure& t, double lambda, double nu) {
  return std::pow(lambda, t.size()) * std::pow(nu, t.leaf_count());
}

// ---------------------------------------------------------------------------
// Labellings

namespace {

// For each node x, the earlier nodes whose label must differ from x's label.
std::vector<std::vector<int>> family_conflicts(const TreeStructure& t, int beta) {
  const int n = t.size();
  std::vector<std::vector<int>> out(n);
  for (int x = 1; x < n; ++x) {
    std::set<int> conf;
    int a = x;
    for (int k = 1; k <= beta && t.parent(a) != -1; ++k) {
      a = t.parent(a);
      // every node of the beta-family of a placed before x
      for (int y = 0; y < x; ++y) {
        int b = y, dist = 0;
        while (b != -1 && b != a && dist <= beta) {
          b = t.parent(b);
          ++dist;
        }
        if (b == a && dist <= beta) conf.insert(y);
      }
    }
    out[x].assign(conf.begin(), conf.end());
  }
  return out;
}

std::vector<std::vector<int>> window_conflicts(const TreeStructure& t, int beta) {
  const int n = t.size();
  std::vector<std::vector<int>> out(n);
  for (int x = 1; x < n; ++x) {
    int a = x;
    for (int k = 1; k <= beta && t.parent(a) != -1; ++k) {
      a = t.parent(a);
      out[x].push_back(a);
    }
    for (int s : t.children(t.parent(x)))
      if (s < x) out[x].push_back(s);
  }
  return out;
}

std::vector<Labelling> enumerate_with(const TreeStructure& t, const PointCloudGraph& g,
                                      const std::vector<std::vector<int>>& conflicts) {
  std::vector<Labelling> out;
  const int n = t.size();
  if (g.empty()) return out;
  Labelling lab(n, -1);
  std::function<void(int)> rec = [&](int x) {
    if (x == n) {
      out.push_back(lab);
      return;
    }
    auto try_label = [&](int v) {
      for (int y : conflicts[x])
        if (lab[y] == v) return;
      lab[x] = v;
      rec(x + 1);
      lab[x] = -1;
    };
    if (x == 0) {
      for (int v = 0; v < static_cast<int>(g.size()); ++v) try_label(v);
    } else {
      for (int v : g.neighbors(lab[t.parent(x)])) try_label(v);
    }
  };
  rec(0);
  return out;
}

}  // namespace

std::vector<Labelling> enumerate_labellings(const TreeStructure& t, const PointCloudGraph& g, int beta) {
  if (beta < 1) throw InputError("beta must be >= 1");
  return enumerate_with(t, g, family_conflicts(t, beta));
}

std::vector<Labelling> enumerate_labellings_reduced(const TreeStructure& t, const PointCloudGraph& g,
                                                    int beta) {
  if (beta < 1) throw InputError("beta must be >= 1");
  return enumerate_with(t, g, window_conflicts(t, beta));
}

bool is_valid_labelling(const TreeStructure& t, const PointCloudGraph& g, const Labelling& l, int beta) {
  if (static_cast<int>(l.size()) != t.size()) return false;
  for (int x = 0; x < t.size(); ++x) {
    if (l[x] < 0 || l[x] >= static_cast<int>(g.size())) return false;
    if (x > 0 && !g.has_edge(l[x], l[t.parent(x)])) return false;
  }
  // family of each node: node plus descendants up to beta levels below
  for (int a = 0; a < t.size(); ++a) {
    std::vector<int> fam{l[a]};
    std::vector<std::pair<int, int>> stack{{a, 0}};
    while (!stack.empty()) {
      auto [x, d] = stack.back();
      stack.pop_back();
      if (d == beta) continue;
      for (int c : t.children(x)) {
        fam.push_back(l[c]);
        stack.emplace_back(c, d + 1);
      }
    }
    std::sort(fam.begin(), fam.end());
    if (std::adjacent_find(fam.begin(), fam.end()) != fam.end()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Subtree patterns

namespace {

std::vector<std::vector<int>> pattern_children(const SubtreePattern& p) {
  std::vector<std::vector<int>> ch(p.size());
  for (int i = 1; i < p.size(); ++i) ch[p.parent[i]].push_back(i);
  return ch;
}

std::vector<int> pattern_depths(const SubtreePattern& p) {
  std::vector<int> d(p.size(), 0);
  for (int i = 1; i < p.size(); ++i) d[i] = d[p.parent[i]] + 1;
  return d;
}

std::string labelled_key(const SubtreePattern& p, const std::vector<std::vector<int>>& ch, int i,
                         bool sort_children) {
  std::vector<std::string> kids;
  for (int c : ch[i]) kids.push_back(labelled_key(p, ch, c, sort_children));
  if (sort_children) std::sort(kids.begin(), kids.end());
  std::string s = std::to_string(p.vertex[i]);
  if (!kids.empty()) {
    s += "[";
    for (std::size_t k = 0; k < kids.size(); ++k) {
      if (k) s += ",";
      s += kids[k];
    }
    s += "]";
  }
  return s;
}

// Breadth-first relayout of the subtree rooted at `from`, keeping nodes with
// depth (relative to `from`) <= max_depth, children visited in `order`.
SubtreePattern relayout(const SubtreePattern& p, const std::vector<std::vector<int>>& order, int from,
                        int max_depth, bool ordered) {
  SubtreePattern out;
  out.ordered = ordered;
  std::vector<std::pair<int, int>> queue{{from, -1}};
  std::vector<int> depth{0};
  for (std::size_t q = 0; q < queue.size(); ++q) {
    auto [x, par] = queue[q];
    out.vertex.push_back(p.vertex[x]);
    out.parent.push_back(par);
    if (depth[q] == max_depth) continue;
    for (int c : order[x]) {
      queue.emplace_back(c, static_cast<int>(q));
      depth.push_back(depth[q] + 1);
    }
  }
  return out;
}

SubtreePattern canonical_unordered(const SubtreePattern& p) {
  auto ch = pattern_children(p);
  std::vector<std::string> shape(p.size()), key(p.size());
  {
    TreeStructure t(p.parent);
    for (int i = 0; i < p.size(); ++i) {
      shape[i] = t.subtree_code(i);
      key[i] = labelled_key(p, ch, i, true);
    }
  }
  for (auto& c : ch)
    std::sort(c.begin(), c.end(), [&](int a, int b) {
      return std::tie(shape[a], key[a]) < std::tie(shape[b], key[b]);
    });
  return relayout(p, ch, 0, 1 << 30, false);
}

}  // namespace

int SubtreePattern::generations() const {
  auto d = pattern_depths(*this);
  return 1 + *std::max_element(d.begin(), d.end());
}

TreeStructure SubtreePattern::structure() const { return TreeStructure(parent); }

std::string SubtreePattern::shape_code() const { return structure().canonical_code(); }

std::string SubtreePattern::key() const {
  return labelled_key(*this, pattern_children(*this), 0, !ordered);
}

std::string SubtreePattern::unordered_key() const {
  return labelled_key(*this, pattern_children(*this), 0, true);
}

bool tree_equivalent(const SubtreePattern& a, const SubtreePattern& b) {
  return a.shape_code() == b.shape_code();
}

std::string ordered_shape_code(const SubtreePattern& p) {
  auto ch = pattern_children(p);
  std::function<std::string(int)> rec = [&](int i) {
    std::string s = "(";
    for (int c : ch[i]) s += rec(c);
    return s + ")";
  };
  return rec(0);
}

SubtreePattern subpattern(const SubtreePattern& p, int node, int max_depth) {
  if (node < 0 || node >= p.size()) throw InputError("subpattern: node out of range");
  return relayout(p, pattern_children(p), node, max_depth, p.ordered);
}

std::vector<SubtreePattern> build_patterns(const PointCloudGraph& g, int alpha, int beta,
                                           PatternOptions options) {
  if (alpha < 1 || beta < 1) throw InputError("build_patterns: alpha, beta must be >= 1");
  std::vector<SubtreePattern> out;
  std::unordered_set<std::string> seen;

  std::vector<int> vertex, parent, depth;
  std::vector<char> used(g.size(), 0);

  auto emit = [&]() {
    SubtreePattern p{vertex, parent, true};
    if (!options.ordered) {
      p = canonical_unordered(p);
      if (!seen.insert(p.key()).second) return;
    }
    out.push_back(std::move(p));
    if (out.size() > options.cap)
      throw GuardExceeded("pattern count exceeds cap of " + std::to_string(options.cap));
  };

  // Expand nodes in breadth-first order; node q picks an ordered tuple of
  // fresh neighbours as its children.
  std::function<void(std::size_t)> expand = [&](std::size_t q) {
    if (q == vertex.size()) {
      emit();
      return;
    }
    if (depth[q] == beta - 1) {
      expand(q + 1);
      return;
    }
    std::vector<int> picked;
    std::function<void()> choose = [&]() {
      expand(q + 1);
      if (static_cast<int>(picked.size()) == alpha) return;
      for (int w : g.neighbors(vertex[q])) {
        if (used[w]) continue;
        used[w] = 1;
        picked.push_back(w);
        vertex.push_back(w);
        parent.push_back(static_cast<int>(q));
        depth.push_back(depth[q] + 1);
        choose();
        depth.pop_back();
        parent.pop_back();
        vertex.pop_back();
        picked.pop_back();
        used[w] = 0;
      }
    };
    choose();
  };

  for (int v = 0; v < static_cast<int>(g.size()); ++v) {
    vertex = {v};
    parent = {-1};
    depth = {0};
    used[v] = 1;
    expand(0);
    used[v] = 0;
  }
  return out;
}

AugmentedGraph build_augmented_graph(std::vector<SubtreePattern> patterns, const PointCloudGraph& g,
                                     int alpha, int beta) {
  if (alpha < 1 || beta < 1) throw InputError("build_augmented_graph: alpha, beta must be >= 1");
  AugmentedGraph ag;
  ag.patterns = std::move(patterns);
  const int np = static_cast<int>(ag.patterns.size());
  ag.out.assign(np, {});
  ag.in.assign(np, {});

  std::set<std::pair<int, int>> edges;
  if (beta == 1) {
    std::unordered_map<int, std::vector<int>> by_root;
    for (int i = 0; i < np; ++i) by_root[ag.patterns[i].root()].push_back(i);
    for (int i = 0; i < np; ++i)
      for (int w : g.neighbors(ag.patterns[i].root()))
        for (int j : by_root[w]) edges.emplace(i, j);
  } else {
    // top beta-1 levels of each pattern, keyed like the pattern itself
    std::unordered_map<std::string, std::vector<int>> by_top;
    std::vector<std::vector<int>> last_level(np);
    for (int j = 0; j < np; ++j) {
      const auto& p = ag.patterns[j];
      auto ch = pattern_children(p);
      auto d = pattern_depths(p);
      SubtreePattern top = relayout(p, ch, 0, beta - 2, p.ordered);
      by_top[top.key()].push_back(j);
      for (int i = 0; i < p.size(); ++i)
        if (d[i] == beta - 1) last_level[j].push_back(p.vertex[i]);
    }
    for (int i = 0; i < np; ++i) {
      const auto& r0 = ag.patterns[i];
      auto ch = pattern_children(r0);
      std::unordered_set<int> members(r0.vertex.begin(), r0.vertex.end());
      for (int c : ch[0]) {
        SubtreePattern sub = relayout(r0, ch, c, beta, r0.ordered);
        auto it = by_top.find(sub.key());
        if (it == by_top.end()) continue;
        for (int j : it->second) {
          bool fresh = std::none_of(last_level[j].begin(), last_level[j].end(),
                                    [&](int v) { return members.count(v) > 0; });
          if (fresh) edges.emplace(i, j);
        }
      }
    }
  }
  for (auto [a, b] : edges) {
    ag.edges.emplace_back(a, b);
    ag.out[a].push_back(b);
    ag.in[b].push_back(a);
  }
  return ag;
}

SubtreePattern root_pattern(const TreeStructure& t, const Labelling& labels, int beta) {
  SubtreePattern full{labels, t.parents(), true};
  std::vector<std::vector<int>> order(t.size());
  for (int i = 0; i < t.size(); ++i) order[i] = t.children(i);
  return relayout(full, order, 0, beta - 1, true);
}

// ---------------------------------------------------------------------------
// Graphical models over tree structures

DecomposableModel build_model_for_tree(const TreeStructure& t, int beta) {
  if (beta < 1) throw InputError("beta must be >= 1");
  const int n = t.size();
  auto family = [&](int u) {
    IndexSet fam;
    std::vector<std::pair<int, int>> stack{{u, 0}};
    while (!stack.empty()) {
      auto [x, d] = stack.back();
      stack.pop_back();
      fam.push_back(x);
      if (d == beta) continue;
      for (int c : t.children(x)) stack.emplace_back(c, d + 1);
    }
    std::sort(fam.begin(), fam.end());
    return fam;
  };
  // Family of u is maximal for the root and whenever u has a descendant
  // exactly beta levels below; otherwise it sits inside its parent's family.
  std::vector<int> clique_of(n, -1);
  std::vector<IndexSet> cliques;
  std::vector<int> parent;
  for (int u = 0; u < n; ++u) {
    if (u != 0 && t.subtree_generations(u) <= beta) continue;
    clique_of[u] = static_cast<int>(cliques.size());
    cliques.push_back(family(u));
    parent.push_back(u == 0 ? -1 : clique_of[t.parent(u)]);
  }
  return DecomposableModel(n, std::move(cliques), std::move(parent));
}

DecomposableModel build_window_model(const TreeStructure& t, int beta) {
  if (beta < 1) throw InputError("beta must be >= 1");
  const int n = t.size();
  if (n == 1) return DecomposableModel::complete(1);
  std::vector<int> clique_of(n, -1);
  std::vector<IndexSet> cliques;
  std::vector<int> parent;
  for (int u = 0; u < n; ++u) {
    if (t.children(u).empty()) continue;
    IndexSet c{u};
    for (int a = u, k = 1; k < beta && t.parent(a) != -1; ++k) {
      a = t.parent(a);
      c.push_back(a);
    }
    for (int ch : t.children(u)) c.push_back(ch);
    clique_of[u] = static_cast<int>(cliques.size());
    cliques.push_back(std::move(c));
    parent.push_back(u == 0 ? -1 : clique_of[t.parent(u)]);
  }
  return DecomposableModel(n, std::move(cliques), std::move(parent));
}

}  // namespace twk
