#include "twk/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "twk/error.hpp"

namespace twk {

void KernelConfig::validate() const {
  walk.validate();
  scales.validate();
  if (pattern_cap == 0) throw InputError("pattern cap must be > 0");
}

namespace {

double log_det_sym(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("matrix is not positive definite");
  const Matrix& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Matrix pick(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

Matrix attribute_matrix(const PointCloudGraph& g, const PointCloudGraph& h, double upsilon) {
  Matrix a(g.size(), h.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j)
      a(i, j) = attribute_kernel(g.vertex(i).attribute, h.vertex(j).attribute, upsilon);
  return a;
}

double factorial(int p) {
  double f = 1.0;
  for (int k = 2; k <= p; ++k) f *= k;
  return f;
}

void check_guard(const PointCloudGraph& g, const PointCloudGraph& h,
                 const BruteForceGuard& guard, int depth) {
  if (g.size() > guard.max_vertices || h.size() > guard.max_vertices)
    throw GuardExceeded("brute force limited to " + std::to_string(guard.max_vertices) + " vertices");
  if (depth > guard.max_gamma)
    throw GuardExceeded("brute force limited to gamma <= " + std::to_string(guard.max_gamma));
}

std::string root_key(const TreeStructure& t, const Labelling& l, const KernelConfig& cfg) {
  int levels = cfg.reduced_patterns ? 1 : cfg.walk.beta;
  return root_pattern(t, l, levels).unordered_key();
}

double brute_sum(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg, int depth,
                 const SubtreePattern* r0, const SubtreePattern* s0) {
  if (g.empty() || h.empty()) return 0.0;
  const WalkParams& w = cfg.walk;
  Matrix k = position_kernel_matrix(g, cfg.scales);
  Matrix l = position_kernel_matrix(h, cfg.scales);
  Matrix ka = attribute_matrix(g, h, cfg.scales.upsilon);
  const std::string r_key = r0 ? r0->unordered_key() : "";
  const std::string s_key = s0 ? s0->unordered_key() : "";

  double total = 0.0;
  for (const TreeStructure& t : enumerate_tree_structures(w.alpha, depth)) {
    DecomposableModel model =
        cfg.reduced_patterns ? build_window_model(t, w.beta) : build_model_for_tree(t, w.beta);
    auto labels = [&](const PointCloudGraph& x) {
      return cfg.reduced_patterns ? enumerate_labellings_reduced(t, x, w.beta)
                                  : enumerate_labellings(t, x, w.beta);
    };
    auto is = labels(g);
    auto js = labels(h);
    if (r0) {
      std::erase_if(is, [&](const Labelling& i) { return root_key(t, i, cfg) != r_key; });
      std::erase_if(js, [&](const Labelling& j) { return root_key(t, j, cfg) != s_key; });
    }
    const double coef = penalization(t, w.lambda, w.nu) / t.automorphism_count();
    double sum = 0.0;
    for (const auto& i : is) {
      Matrix ki = pick(k, i, i);
      for (const auto& j : js) {
        double term = std::exp(log_kernel_b_model(ki, pick(l, j, j), model));
        for (int x = 0; x < t.size(); ++x) term *= ka(i[x], j[x]);
        sum += term;
      }
    }
    total += coef * sum;
  }
  return total;
}

}  // namespace

double brute_force_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg,
                          BruteForceGuard guard) {
  cfg.validate();
  check_guard(g, h, guard, cfg.walk.gamma);
  return brute_sum(g, h, cfg, cfg.walk.gamma, nullptr, nullptr);
}

double brute_force_restricted_kernel(const PointCloudGraph& g, const PointCloudGraph& h,
                                     const SubtreePattern& r0, const SubtreePattern& s0, int depth,
                                     const KernelConfig& cfg, BruteForceGuard guard) {
  cfg.validate();
  if (depth < 1) return 0.0;
  check_guard(g, h, guard, depth);
  if (!tree_equivalent(r0, s0)) return 0.0;
  return brute_sum(g, h, cfg, depth, &r0, &s0);
}

// ---------------------------------------------------------------------------
// Per-graph preparation

namespace {

// One way of extending a state by one generation.
struct Extension {
  std::vector<int> child;  // child states
  std::string signature;   // child shapes, matched across graphs
  int arity = 0;
  Matrix coef;             // K_{N,R} K_R^{-1}
  Matrix cond;             // K_{N|R}
  double ld_cond = 0.0;
  Matrix joint;            // K over R and N
  double ld_joint = 0.0;
};

struct State {
  std::vector<int> vertex;
  std::string shape;
  std::string unordered_key;
  int gens = 1;
  int base_nodes = 1;
  int leaves = 1;
  double weight = 1.0;
  int root_slot = 0;
  std::vector<int> base_slots;
  bool top = true;
  bool extendable = false;
  bool base_when_extending = false;
  Matrix block;  // K over the state's vertices
  double ld_block = 0.0;
  std::vector<Extension> ext;  // sorted by signature
};

}  // namespace

struct PreparedGraph::Impl {
  PointCloudGraph graph;
  Matrix k;
  std::vector<State> states;
  std::map<std::string, std::vector<int>> by_shape;
};

namespace {

void finish_extension(const Matrix& k, const State& s, std::vector<int> fresh, Extension& e) {
  const auto nr = static_cast<Eigen::Index>(s.vertex.size());
  const auto nn = static_cast<Eigen::Index>(fresh.size());
  std::vector<int> all = s.vertex;
  all.insert(all.end(), fresh.begin(), fresh.end());
  e.joint = pick(k, all, all);
  e.ld_joint = log_det_sym(e.joint);
  if (nn == 0) {
    e.coef = Matrix(0, nr);
    e.cond = Matrix(0, 0);
    return;
  }
  Matrix knr = pick(k, fresh, s.vertex);
  Eigen::LLT<Matrix> llt(s.block);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("pattern block is not positive definite");
  e.coef = llt.solve(knr.transpose()).transpose();
  Matrix c = pick(k, fresh, fresh) - e.coef * knr.transpose();
  e.cond = 0.5 * (c + c.transpose());
  e.ld_cond = log_det_sym(e.cond);
}

int count_leaves(const SubtreePattern& p) {
  std::vector<int> kids(p.size(), 0);
  for (int i = 1; i < p.size(); ++i) ++kids[p.parent[i]];
  return static_cast<int>(std::count(kids.begin(), kids.end(), 0));
}

double order_weight(const SubtreePattern& p) {
  std::vector<int> kids(p.size(), 0);
  for (int i = 1; i < p.size(); ++i) ++kids[p.parent[i]];
  double w = 1.0;
  for (int c : kids) w /= factorial(c);
  return w;
}

// Ordered tuples of distinct vertices from `pool`, sizes 1..alpha.
void for_each_tuple(std::span<const int> pool, int alpha, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> cur;
  std::vector<char> used(pool.size(), 0);
  std::function<void()> rec = [&]() {
    if (!cur.empty()) fn(cur);
    if (static_cast<int>(cur.size()) == alpha) return;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      used[i] = 1;
      cur.push_back(pool[i]);
      rec();
      cur.pop_back();
      used[i] = 0;
    }
  };
  rec();
}

void build_full_states(PreparedGraph::Impl& impl, const KernelConfig& cfg) {
  const int alpha = cfg.walk.alpha, beta = cfg.walk.beta;
  const PointCloudGraph& g = impl.graph;
  auto pats = build_patterns(g, alpha, beta, {true, cfg.pattern_cap});
  const int np = static_cast<int>(pats.size());
  impl.states.resize(np);

  std::unordered_map<std::string, std::vector<int>> by_top;
  std::vector<int> single(g.size(), -1);
  std::vector<std::vector<int>> fresh_of(np);
  for (int i = 0; i < np; ++i) {
    const auto& p = pats[i];
    State& s = impl.states[i];
    s.vertex = p.vertex;
    s.shape = ordered_shape_code(p);
    s.unordered_key = p.unordered_key();
    s.gens = p.generations();
    s.base_nodes = p.size();
    s.leaves = count_leaves(p);
    s.weight = order_weight(p);
    s.base_slots.resize(p.size());
    for (int x = 0; x < p.size(); ++x) s.base_slots[x] = x;
    s.extendable = s.gens == beta;
    s.base_when_extending = beta == 1;
    if (p.size() == 1) single[p.root()] = i;
    if (beta >= 2) {
      by_top[subpattern(p, 0, beta - 2).key()].push_back(i);
      std::vector<int> depth(p.size(), 0);
      for (int x = 1; x < p.size(); ++x) {
        depth[x] = depth[p.parent[x]] + 1;
        if (depth[x] == beta - 1) fresh_of[i].push_back(p.vertex[x]);
      }
    }
  }

  for (int i = 0; i < np; ++i) {
    State& s = impl.states[i];
    s.block = pick(impl.k, s.vertex, s.vertex);
    s.ld_block = log_det_sym(s.block);
    if (!s.extendable) continue;
    const auto& p = pats[i];
    if (beta == 1) {
      for_each_tuple(g.neighbors(p.root()), alpha, [&](const std::vector<int>& kids) {
        Extension e;
        for (int v : kids) e.child.push_back(single[v]);
        e.arity = static_cast<int>(kids.size());
        e.signature = std::to_string(e.arity);
        finish_extension(impl.k, s, kids, e);
        s.ext.push_back(std::move(e));
      });
    } else {
      std::vector<int> slots;
      for (int x = 1; x < p.size(); ++x)
        if (p.parent[x] == 0) slots.push_back(x);
      std::vector<const std::vector<int>*> cands;
      for (int c : slots) {
        auto it = by_top.find(subpattern(p, c, beta).key());
        if (it == by_top.end()) throw std::logic_error("missing child pattern");
        cands.push_back(&it->second);
      }
      std::vector<char> taken(g.size(), 0);
      for (int v : p.vertex) taken[v] = 1;
      std::vector<int> chosen;
      std::function<void(std::size_t)> rec = [&](std::size_t slot) {
        if (slot == slots.size()) {
          Extension e;
          e.child = chosen;
          e.arity = static_cast<int>(slots.size());
          std::vector<int> fresh;
          for (int c : chosen) {
            e.signature += impl.states[c].shape;
            e.signature += '|';
            fresh.insert(fresh.end(), fresh_of[c].begin(), fresh_of[c].end());
          }
          finish_extension(impl.k, s, std::move(fresh), e);
          s.ext.push_back(std::move(e));
          return;
        }
        for (int c : *cands[slot]) {
          const auto& f = fresh_of[c];
          if (std::any_of(f.begin(), f.end(), [&](int v) { return taken[v]; })) continue;
          for (int v : f) taken[v] = 1;
          chosen.push_back(c);
          rec(slot + 1);
          chosen.pop_back();
          for (int v : f) taken[v] = 0;
        }
      };
      rec(0);
    }
  }
}

void build_window_states(PreparedGraph::Impl& impl, const KernelConfig& cfg) {
  const int alpha = cfg.walk.alpha, beta = cfg.walk.beta;
  const PointCloudGraph& g = impl.graph;
  std::map<std::vector<int>, int> index;
  std::vector<int> cur;
  std::vector<char> on(g.size(), 0);
  std::function<void()> rec = [&]() {
    index.emplace(cur, 0);
    if (index.size() > cfg.pattern_cap)
      throw GuardExceeded("window count exceeds cap of " + std::to_string(cfg.pattern_cap));
    if (static_cast<int>(cur.size()) == beta) return;
    for (int w : g.neighbors(cur.back())) {
      if (on[w]) continue;
      on[w] = 1;
      cur.push_back(w);
      rec();
      cur.pop_back();
      on[w] = 0;
    }
  };
  for (int v = 0; v < static_cast<int>(g.size()); ++v) {
    cur = {v};
    on[v] = 1;
    rec();
    on[v] = 0;
  }
  int next = 0;
  for (auto& [win, id] : index) id = next++;
  impl.states.resize(index.size());
  for (const auto& [win, id] : index) {
    State& s = impl.states[id];
    s.vertex = win;
    s.shape = "w" + std::to_string(win.size());
    s.unordered_key = win.size() == 1 ? std::to_string(win[0]) : "";
    s.root_slot = static_cast<int>(win.size()) - 1;
    s.base_slots = {s.root_slot};
    s.top = win.size() == 1;
    s.extendable = true;
    s.base_when_extending = true;
    s.block = pick(impl.k, win, win);
    s.ld_block = log_det_sym(s.block);
  }
  for (auto& s : impl.states) {
    const int u = s.vertex.back();
    std::vector<int> pool;
    for (int w : g.neighbors(u))
      if (std::find(s.vertex.begin(), s.vertex.end(), w) == s.vertex.end()) pool.push_back(w);
    for_each_tuple(pool, alpha, [&](const std::vector<int>& kids) {
      Extension e;
      for (int c : kids) {
        std::vector<int> win = s.vertex;
        win.push_back(c);
        if (static_cast<int>(win.size()) > beta) win.erase(win.begin());
        e.child.push_back(index.at(win));
      }
      e.arity = static_cast<int>(kids.size());
      e.signature = std::to_string(e.arity);
      finish_extension(impl.k, s, kids, e);
      s.ext.push_back(std::move(e));
    });
  }
}

}  // namespace

PreparedGraph::PreparedGraph(const PointCloudGraph& g, const KernelConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  impl_->graph = g;
  if (g.empty()) return;
  impl_->k = position_kernel_matrix(g, cfg.scales);
  if (cfg.reduced_patterns)
    build_window_states(*impl_, cfg);
  else
    build_full_states(*impl_, cfg);
  for (int i = 0; i < static_cast<int>(impl_->states.size()); ++i) {
    auto& s = impl_->states[i];
    std::stable_sort(s.ext.begin(), s.ext.end(),
                     [](const Extension& a, const Extension& b) { return a.signature < b.signature; });
    impl_->by_shape[s.shape].push_back(i);
  }
}

PreparedGraph::~PreparedGraph() = default;
PreparedGraph::PreparedGraph(PreparedGraph&&) noexcept = default;
PreparedGraph& PreparedGraph::operator=(PreparedGraph&&) noexcept = default;

const PointCloudGraph& PreparedGraph::graph() const { return impl_->graph; }
std::size_t PreparedGraph::state_count() const { return impl_->states.size(); }

// ---------------------------------------------------------------------------
// Pair recursion

namespace {

struct PairState {
  int r = 0, s = 0;
  double weight = 1.0;
  std::size_t attr_begin = 0, attr_end = 0;  // vertex pairs entering the base term
  int root_g = 0, root_h = 0;
  double top_factor = 1.0;
  int gens = 1, base_nodes = 1, leaves = 1;
  bool top = true, extendable = false, base_when_extending = false;
  std::size_t term_begin = 0, term_end = 0;
};

struct Term {
  double inner = 0.0;  // conditional kernel / p!
  double outer = 0.0;  // joint kernel / p!
  std::size_t child_begin = 0;
  int arity = 0;
};

// Everything about a pair that depends on positions only; attribute factors
// and penalizations are applied in `evaluate`.
struct PairPlan {
  std::vector<PairState> states;
  std::vector<Term> terms;
  std::vector<int> children;
  std::vector<std::pair<int, int>> attr_pairs;
};

double log_kb_joint(const Matrix& a, double ld_a, const Matrix& b, double ld_b) {
  return 0.5 * ld_a + 0.5 * ld_b - log_det_sym(0.5 * (a + b));
}

double log_kb_conditional(const Extension& a, const Extension& b, bool flip) {
  if (a.cond.rows() == 0) return 0.0;
  Matrix diff = flip ? Matrix(a.coef + b.coef) : Matrix(a.coef - b.coef);
  Matrix m = 0.5 * (a.cond + b.cond) + 0.25 * diff * diff.transpose();
  double ld = std::max(log_det_sym(m), std::log(kConditionalDetFloor));
  return 0.5 * a.ld_cond + 0.5 * b.ld_cond - ld;
}

PairPlan make_plan(const PreparedGraph::Impl& g, const PreparedGraph::Impl& h, const KernelConfig& cfg) {
  PairPlan plan;
  if (g.states.empty() || h.states.empty()) return plan;
  const std::size_t nh = h.states.size();
  std::unordered_map<std::uint64_t, int> id;
  auto key = [nh](int r, int s) { return static_cast<std::uint64_t>(r) * nh + static_cast<std::uint64_t>(s); };
  for (const auto& [shape, rs] : g.by_shape) {
    auto it = h.by_shape.find(shape);
    if (it == h.by_shape.end()) continue;
    for (int r : rs)
      for (int s : it->second) {
        id.emplace(key(r, s), static_cast<int>(plan.states.size()));
        plan.states.push_back({r, s});
      }
  }
  for (auto& ps : plan.states) {
    const State& a = g.states[ps.r];
    const State& b = h.states[ps.s];
    ps.weight = a.weight;
    ps.attr_begin = plan.attr_pairs.size();
    for (int x : a.base_slots) plan.attr_pairs.emplace_back(a.vertex[x], b.vertex[x]);
    ps.attr_end = plan.attr_pairs.size();
    ps.root_g = a.vertex[a.root_slot];
    ps.root_h = b.vertex[b.root_slot];
    ps.gens = a.gens;
    ps.base_nodes = a.base_nodes;
    ps.leaves = a.leaves;
    ps.top = a.top;
    ps.extendable = a.extendable;
    ps.base_when_extending = a.base_when_extending;
    if (ps.top) ps.top_factor = std::exp(log_kb_joint(a.block, a.ld_block, b.block, b.ld_block));
    ps.term_begin = plan.terms.size();
    if (ps.extendable) {
      std::size_t i = 0, j = 0;
      while (i < a.ext.size() && j < b.ext.size()) {
        int c = a.ext[i].signature.compare(b.ext[j].signature);
        if (c < 0) { ++i; continue; }
        if (c > 0) { ++j; continue; }
        std::size_t i_end = i, j_end = j;
        while (i_end < a.ext.size() && a.ext[i_end].signature == a.ext[i].signature) ++i_end;
        while (j_end < b.ext.size() && b.ext[j_end].signature == b.ext[j].signature) ++j_end;
        for (std::size_t x = i; x < i_end; ++x)
          for (std::size_t y = j; y < j_end; ++y) {
            const Extension& ea = a.ext[x];
            const Extension& eb = b.ext[y];
            Term t;
            const double scale = 1.0 / factorial(ea.arity);
            t.inner = scale * std::exp(log_kb_conditional(ea, eb, cfg.fault_flip_conditional));
            if (ps.top) t.outer = scale * std::exp(log_kb_joint(ea.joint, ea.ld_joint, eb.joint, eb.ld_joint));
            t.child_begin = plan.children.size();
            t.arity = ea.arity;
            for (int k = 0; k < ea.arity; ++k) {
              auto cid = id.find(key(ea.child[k], eb.child[k]));
              if (cid == id.end()) throw std::logic_error("child state pair missing");
              plan.children.push_back(cid->second);
            }
            plan.terms.push_back(t);
          }
        i = i_end;
        j = j_end;
      }
    }
    ps.term_end = plan.terms.size();
  }
  return plan;
}

// Totals of the top-level recursion for depths 1..gamma_max. When
// `per_state` is given it receives the top values at depth gamma_max.
std::vector<double> evaluate(const PairPlan& plan, const Matrix& ka, double lambda, double nu, int gamma_max,
                             std::vector<double>* per_state = nullptr) {
  const std::size_t n = plan.states.size();
  std::vector<double> totals(gamma_max, 0.0);
  std::vector<double> base(n), root(n), prev(n, 0.0), cur(n, 0.0), top(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = plan.states[i];
    double b = s.weight * std::pow(lambda, s.base_nodes) * std::pow(nu, s.leaves);
    for (std::size_t k = s.attr_begin; k < s.attr_end; ++k)
      b *= ka(plan.attr_pairs[k].first, plan.attr_pairs[k].second);
    base[i] = b;
    root[i] = lambda * ka(s.root_g, s.root_h);
  }
  for (int d = 1; d <= gamma_max; ++d) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = plan.states[i];
      double e = 0.0, t = 0.0;
      if (d < s.gens) {
      } else if (!s.extendable || d == s.gens) {
        e = base[i];
        t = base[i] * s.top_factor;
      } else {
        double ei = 0.0, ti = 0.0;
        for (std::size_t k = s.term_begin; k < s.term_end; ++k) {
          const Term& term = plan.terms[k];
          double prod = 1.0;
          for (int c = 0; c < term.arity; ++c) prod *= prev[plan.children[term.child_begin + c]];
          ei += term.inner * prod;
          ti += term.outer * prod;
        }
        e = root[i] * ei;
        t = root[i] * ti;
        if (s.base_when_extending) {
          e += base[i];
          t += base[i] * s.top_factor;
        }
      }
      cur[i] = e;
      top[i] = s.top ? t : 0.0;
      total += top[i];
    }
    totals[d - 1] = total;
    std::swap(prev, cur);
  }
  if (per_state) *per_state = top;
  return totals;
}

bool in_order(const PreparedGraph& g, const PreparedGraph& h) {
  return !(h.graph() < g.graph());
}

}  // namespace

std::vector<KernelProfile> dp_kernel_profile(const PreparedGraph& g, const PreparedGraph& h,
                                             const KernelConfig& cfg, int gamma_max,
                                             std::span<const double> nus,
                                             std::span<const double> upsilons) {
  cfg.validate();
  if (gamma_max < 1) throw InputError("gamma_max must be >= 1");
  if (!in_order(g, h)) return dp_kernel_profile(h, g, cfg, gamma_max, nus, upsilons);
  PairPlan plan = make_plan(g.impl(), h.impl(), cfg);
  std::vector<KernelProfile> out;
  for (double upsilon : upsilons) {
    if (!(upsilon > 0)) throw InputError("upsilon must be > 0");
    Matrix ka = attribute_matrix(g.graph(), h.graph(), upsilon);
    KernelProfile prof;
    for (double nu : nus) {
      if (!(nu > 0)) throw InputError("nu must be > 0");
      prof.push_back(evaluate(plan, ka, cfg.walk.lambda, nu, gamma_max));
    }
    out.push_back(std::move(prof));
  }
  return out;
}

KernelProfile dp_kernel_profile(const PreparedGraph& g, const PreparedGraph& h, const KernelConfig& cfg,
                                int gamma_max, std::span<const double> nus) {
  const double upsilon = cfg.scales.upsilon;
  return dp_kernel_profile(g, h, cfg, gamma_max, nus, std::span<const double>(&upsilon, 1))[0];
}

double dp_kernel(const PreparedGraph& g, const PreparedGraph& h, const KernelConfig& cfg) {
  const double nu = cfg.walk.nu;
  return dp_kernel_profile(g, h, cfg, cfg.walk.gamma, std::span<const double>(&nu, 1))[0].back();
}

double dp_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg) {
  return dp_kernel(PreparedGraph(g, cfg), PreparedGraph(h, cfg), cfg);
}

double dp_restricted_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const SubtreePattern& r0,
                            const SubtreePattern& s0, int depth, const KernelConfig& cfg) {
  cfg.validate();
  if (depth < 1 || !tree_equivalent(r0, s0)) return 0.0;
  PreparedGraph pg(g, cfg), ph(h, cfg);
  PairPlan plan = make_plan(pg.impl(), ph.impl(), cfg);
  std::vector<double> top;
  evaluate(plan, attribute_matrix(g, h, cfg.scales.upsilon), cfg.walk.lambda, cfg.walk.nu, depth, &top);
  const std::string rk = r0.unordered_key(), sk = s0.unordered_key();
  double sum = 0.0;
  for (std::size_t i = 0; i < plan.states.size(); ++i) {
    const auto& ps = plan.states[i];
    if (ps.top && pg.impl().states[ps.r].unordered_key == rk && ph.impl().states[ps.s].unordered_key == sk)
      sum += top[i];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Gram matrices

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t nthreads = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto run = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard lock(mu);
        if (failed_at < i) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  if (nthreads <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

Matrix cosine_normalize(const Matrix& k) {
  Matrix out = k;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      double d = k(i, i) * k(j, j);
      out(i, j) = d > 0 ? k(i, j) / std::sqrt(d) : 0.0;
    }
  return out;
}

GramProfile gram_profile(std::span<const PointCloudGraph> graphs, const KernelConfig& cfg, int gamma_max,
                         std::span<const double> nus, std::span<const double> upsilons, int workers,
                         const ProgressFn& progress) {
  cfg.validate();
  if (graphs.empty()) throw InputError("gram matrix needs at least one graph");
  const std::size_t n = graphs.size();
  std::vector<std::unique_ptr<PreparedGraph>> prepared(n);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      prepared[i] = std::make_unique<PreparedGraph>(graphs[i], cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("graph " + std::to_string(i) + ": " + e.what());
    }
  });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<std::vector<KernelProfile>> values(pairs.size());
  std::mutex progress_mu;
  std::size_t done = 0;
  parallel_for(pairs.size(), workers, [&](std::size_t p) {
    auto [i, j] = pairs[p];
    try {
      values[p] = dp_kernel_profile(*prepared[i], *prepared[j], cfg, gamma_max, nus, upsilons);
    } catch (const std::exception& e) {
      throw std::runtime_error("kernel pair (" + std::to_string(i) + "," + std::to_string(j) +
                               "): " + e.what());
    }
    if (progress) {
      std::lock_guard lock(progress_mu);
      progress(++done, pairs.size());
    }
  });
  GramProfile out(upsilons.size(),
                  std::vector<std::vector<Matrix>>(nus.size(), std::vector<Matrix>(gamma_max, Matrix(n, n))));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [i, j] = pairs[p];
    for (std::size_t u = 0; u < upsilons.size(); ++u)
      for (std::size_t v = 0; v < nus.size(); ++v)
        for (int d = 0; d < gamma_max; ++d) out[u][v][d](i, j) = out[u][v][d](j, i) = values[p][u][v][d];
  }
  if (cfg.normalize)
    for (auto& a : out)
      for (auto& b : a)
        for (auto& m : b) m = cosine_normalize(m);
  return out;
}

GramMatrix gram_matrix(std::span<const PointCloudGraph> graphs, const KernelConfig& cfg, int workers,
                       std::vector<std::string> ids, std::vector<int> labels, const ProgressFn& progress) {
  if (!ids.empty() && ids.size() != graphs.size()) throw InputError("gram_matrix: id count mismatch");
  if (!labels.empty() && labels.size() != graphs.size()) throw InputError("gram_matrix: label count mismatch");
  const double nu = cfg.walk.nu, upsilon = cfg.scales.upsilon;
  auto prof = gram_profile(graphs, cfg, cfg.walk.gamma, std::span<const double>(&nu, 1),
                           std::span<const double>(&upsilon, 1), workers, progress);
  return GramMatrix{std::move(prof[0][0].back()), std::move(ids), std::move(labels)};
}

}  // namespace twk
