#include "twk/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "text_util.hpp"
#include "twk/classify.hpp"
#include "twk/error.hpp"

namespace twk {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  double u = 0.0;
  while (u <= 0.0) u = unit_uniform(rng);
  const double v = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

PointCloudGraph random_graph(std::mt19937_64& rng, const RandomGraphSpec& spec) {
  const int n = uniform_int(rng, spec.min_vertices, spec.max_vertices);
  std::vector<Vertex> vs(n);
  for (auto& v : vs) {
    v.position = {spec.extent * unit_uniform(rng), spec.extent * unit_uniform(rng)};
    for (int a = 0; a < spec.attr_dim; ++a) v.attribute.push_back(2.0 * unit_uniform(rng) - 1.0);
  }
  std::vector<Edge> es;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (unit_uniform(rng) < spec.edge_probability) es.emplace_back(i, j);
  return PointCloudGraph(std::move(vs), std::move(es));
}

std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(rng, 0, i)]);
  return p;
}

Matrix random_pd_matrix(std::mt19937_64& rng, int n) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = standard_normal(rng);
  Matrix k = a * a.transpose() / n + 0.2 * Matrix::Identity(n, n);
  return (k + k.transpose()) / 2;
}

Matrix random_correlation_matrix(std::mt19937_64& rng, int n) {
  Matrix k = random_pd_matrix(rng, n);
  Eigen::VectorXd d = k.diagonal().cwiseSqrt().cwiseInverse();
  Matrix c = d.asDiagonal() * k * d.asDiagonal();
  c.diagonal().setOnes();
  return c;
}

DecomposableModel random_decomposable_model(std::mt19937_64& rng, int n, int max_clique) {
  std::vector<int> order = random_permutation(rng, n);
  std::vector<IndexSet> cliques;
  std::vector<int> parent;
  int next = 0;
  while (next < n) {
    IndexSet clique;
    int p = -1;
    if (!cliques.empty()) {
      p = uniform_int(rng, 0, static_cast<int>(cliques.size()) - 1);
      IndexSet pool = cliques[p];
      for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[uniform_int(rng, 0, i)]);
      const int keep = uniform_int(rng, 0, std::min<int>(static_cast<int>(pool.size()), max_clique - 1));
      clique.assign(pool.begin(), pool.begin() + keep);
    }
    const int fresh = std::min(n - next, uniform_int(rng, 1, std::max(1, max_clique - static_cast<int>(clique.size()))));
    for (int f = 0; f < fresh; ++f) clique.push_back(order[next++]);
    std::sort(clique.begin(), clique.end());
    cliques.push_back(std::move(clique));
    parent.push_back(p);
  }
  return DecomposableModel(n, std::move(cliques), std::move(parent));
}

DecomposableModel random_tree_model(std::mt19937_64& rng, int n) {
  if (n == 1) return DecomposableModel::complete(1);
  std::vector<int> order = random_permutation(rng, n);
  std::vector<IndexSet> cliques;
  std::vector<int> parent;
  std::vector<int> owner(n, -1);  // some clique holding each placed vertex
  for (int i = 1; i < n; ++i) {
    const int attach = order[uniform_int(rng, 0, i - 1)];
    cliques.push_back({std::min(attach, order[i]), std::max(attach, order[i])});
    parent.push_back(i == 1 ? -1 : owner[attach]);
    const int c = static_cast<int>(cliques.size()) - 1;
    if (i == 1) owner[order[0]] = c;
    if (owner[attach] < 0) owner[attach] = c;
    owner[order[i]] = c;
  }
  return DecomposableModel(n, std::move(cliques), std::move(parent));
}

// ---------------------------------------------------------------------------
// Walk-kernel reference

double walk_kernel_reference(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg) {
  const std::size_t n = g.size(), m = h.size();
  if (n == 0 || m == 0) return 0.0;
  const double tau = cfg.scales.tau, kappa = cfg.scales.kappa, ups = cfg.scales.upsilon;
  const double lambda = cfg.walk.lambda, nu = cfg.walk.nu;
  auto gauss = [](const std::vector<double>& a, const std::vector<double>& b, double s) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-s * d);
  };
  auto pos = [&](const PointCloudGraph& x, std::size_t i, std::size_t j) {
    return gauss(x.vertex(i).position, x.vertex(j).position, tau) + (i == j ? kappa : 0.0);
  };
  auto att = [&](std::size_t v, std::size_t w) { return gauss(g.vertex(v).attribute, h.vertex(w).attribute, ups); };
  auto single = [](double a, double b) { return std::sqrt(a * b) / ((a + b) / 2); };
  // Bhattacharyya kernel of the 2x2 blocks over (p, c).
  auto joint = [&](std::size_t p, std::size_t c, std::size_t q, std::size_t d) {
    const double k00 = pos(g, p, p), k01 = pos(g, p, c), k11 = pos(g, c, c);
    const double l00 = pos(h, q, q), l01 = pos(h, q, d), l11 = pos(h, d, d);
    const double dk = k00 * k11 - k01 * k01, dl = l00 * l11 - l01 * l01;
    const double m00 = (k00 + l00) / 2, m01 = (k01 + l01) / 2, m11 = (k11 + l11) / 2;
    return std::sqrt(dk * dl) / (m00 * m11 - m01 * m01);
  };
  // Kernel between the laws of c given p (and of d given q).
  auto conditional = [&](std::size_t p, std::size_t c, std::size_t q, std::size_t d) {
    const double a = pos(g, c, p) / pos(g, p, p), b = pos(h, d, q) / pos(h, q, q);
    const double vk = pos(g, c, c) - a * pos(g, c, p), vl = pos(h, d, d) - b * pos(h, d, q);
    const double diff = cfg.fault_flip_conditional ? a + b : a - b;
    return std::sqrt(vk * vl) / (0.5 * vk + 0.5 * vl + 0.25 * diff * diff);
  };

  // y(v, w): weighted sum over pairs of walks of the current length ending at (v, w).
  std::vector<double> y(n * m, 0.0), next(n * m, 0.0);
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < m; ++w) total += lambda * att(v, w) * single(pos(g, v, v), pos(h, w, w));
  if (cfg.walk.gamma >= 2) {
    for (std::size_t v1 = 0; v1 < n; ++v1)
      for (std::size_t w1 = 0; w1 < m; ++w1) {
        double s = 0.0;
        for (int v0 : g.neighbors(v1))
          for (int w0 : h.neighbors(w1)) s += att(v0, w0) * joint(v0, v1, w0, w1);
        y[v1 * m + w1] = lambda * lambda * att(v1, w1) * s;
      }
    for (double x : y) total += x;
  }
  for (int len = 3; len <= cfg.walk.gamma; ++len) {
    for (std::size_t v1 = 0; v1 < n; ++v1)
      for (std::size_t w1 = 0; w1 < m; ++w1) {
        double s = 0.0;
        for (int v0 : g.neighbors(v1))
          for (int w0 : h.neighbors(w1)) s += y[v0 * m + w0] * conditional(v0, v1, w0, w1);
        next[v1 * m + w1] = lambda * att(v1, w1) * s;
      }
    std::swap(y, next);
    for (double x : y) total += x;
  }
  return nu * total;
}

// ---------------------------------------------------------------------------
// QP reference

double qp_reference_objective(const Matrix& k, std::span<const int> y, double c) {
  const int n = static_cast<int>(k.rows());
  if (n > 20) throw GuardExceeded("QP reference limited to 20 points");
  Matrix q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * (k(i, j) + (i == j ? 1.0 / (2.0 * c) : 0.0));
  double best = 0.0;  // alpha = 0
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> s;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1u) s.push_back(i);
    const int m = static_cast<int>(s.size());
    // Stationarity on the face: Q_SS a + b y_S = 1, y_S' a = 0.
    Matrix sys = Matrix::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) sys(a, b) = q(s[a], s[b]);
      sys(a, m) = sys(m, a) = y[s[a]];
      rhs(a) = 1.0;
    }
    Eigen::FullPivLU<Matrix> lu(sys);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd sol = lu.solve(rhs);
    if ((sys * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) continue;
    std::vector<double> alpha(n, 0.0);
    bool feasible = true;
    for (int a = 0; a < m; ++a) {
      if (sol(a) < 0.0) feasible = false;
      alpha[s[a]] = sol(a);
    }
    if (feasible) best = std::max(best, svm_dual_objective(k, y, alpha, c));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Suites

bool VerifyReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.failures == 0; });
}

std::string VerifyReport::format() const {
  std::string out;
  char buf[200];
  for (const auto& s : suites) {
    std::snprintf(buf, sizeof buf, "suite %-12s cases %4d  failures %4d  worst %.3g  tolerance %.0e  %s\n",
                  s.name.c_str(), s.cases, s.failures, s.worst, s.tolerance, s.failures ? "FAIL" : "PASS");
    out += buf;
  }
  out += passed() ? "result PASS\n" : "result FAIL\n";
  return out;
}

namespace {

std::mt19937_64 case_rng(std::uint64_t seed, std::uint64_t suite, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(suite), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

template <typename T>
const T& pick_one(std::mt19937_64& rng, std::initializer_list<T> xs) {
  return xs.begin()[rng() % xs.size()];
}

KernelConfig random_scales(std::mt19937_64& rng, const VerifyOptions& opts) {
  KernelConfig cfg;
  cfg.scales.tau = pick_one(rng, {0.05, 0.2, 0.5});
  cfg.scales.kappa = pick_one(rng, {0.01, 0.1});
  cfg.scales.upsilon = pick_one(rng, {0.05, 0.5});
  cfg.walk.lambda = pick_one(rng, {1.0, 0.7});
  cfg.walk.nu = pick_one(rng, {0.1, 0.5});
  cfg.fault_flip_conditional = opts.inject_fault;
  return cfg;
}

double relative(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

// errors[i] is the error measure of case i; failures are cases above tol.
SuiteResult run_suite(const std::string& name, int cases, double tol, int workers,
                      const std::function<double(int)>& body) {
  std::vector<double> errors(cases, 0.0);
  parallel_for(cases, workers, [&](std::size_t i) { errors[i] = body(static_cast<int>(i)); });
  SuiteResult r{name, cases, 0, 0.0, tol};
  for (double e : errors) {
    if (!(e <= tol)) ++r.failures;
    if (!(e <= r.worst)) r.worst = e;
  }
  return r;
}

double min_eig_ratio(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((gram + gram.transpose()) / 2, Eigen::EigenvaluesOnly);
  const double trace = std::max(gram.trace(), 1e-300);
  return std::max(0.0, -es.eigenvalues().minCoeff() / trace);
}

}  // namespace

VerifyReport run_verify(const VerifyOptions& opts) {
  VerifyReport rep;
  const bool full = opts.full;
  const int w = opts.workers;

  // DP against the brute-force sum, cycling through arity, order and depth.
  rep.suites.push_back(run_suite("oracle", full ? 240 : 48, 1e-8, w, [&](int i) {
    auto rng = case_rng(opts.seed, 1, i);
    KernelConfig cfg = random_scales(rng, opts);
    const int combo = i % 12;
    cfg.walk.alpha = 1 + combo / 6;
    cfg.walk.beta = 1 + (combo / 3) % 2;
    cfg.walk.gamma = 1 + combo % 3;
    cfg.reduced_patterns = (i / 12) % 3 == 2;
    RandomGraphSpec spec;
    spec.max_vertices = 8;
    spec.edge_probability = cfg.walk.alpha == 2 && cfg.walk.gamma == 3 ? 0.25 : 0.4;
    PointCloudGraph g = random_graph(rng, spec), h = random_graph(rng, spec);
    return relative(dp_kernel(g, h, cfg), brute_force_kernel(g, h, cfg));
  }));

  // Clique/separator form, rooted form and the explicit projection.
  rep.suites.push_back(run_suite("determinant", full ? 200 : 40, 1e-10, w, [&](int i) {
    auto rng = case_rng(opts.seed, 2, i);
    const int n = 1 + i % 10;
    Matrix k = random_pd_matrix(rng, n);
    DecomposableModel q = random_decomposable_model(rng, n);
    const double a = logdet_projection(k, q);
    const double b = logdet_projection_rooted(k, q);
    const double c = log_det_pd(project_onto_model(k, q));
    const double d = logdet_projection_rooted(k, q.rerooted(static_cast<int>(rng() % q.num_cliques())));
    return std::max({relative(b, a), relative(c, a), relative(d, a)});
  }));

  rep.suites.push_back(run_suite("positivity", full ? 15 : 6, 1e-8, w, [&](int i) {
    auto rng = case_rng(opts.seed, 3, i);
    switch (i % 3) {
      case 0: {
        const int n = 4;
        DecomposableModel q = random_decomposable_model(rng, n, 3);
        std::vector<Matrix> ks;
        for (int j = 0; j < 15; ++j) ks.push_back(random_pd_matrix(rng, n));
        Matrix gram(15, 15);
        for (int a = 0; a < 15; ++a)
          for (int b = 0; b < 15; ++b) gram(a, b) = kernel_b_model(ks[a], ks[b], q);
        return min_eig_ratio(gram);
      }
      case 1: {
        const int n = 5;
        DecomposableModel q = random_tree_model(rng, n);
        std::vector<Matrix> ks;
        for (int j = 0; j < 12; ++j) ks.push_back(random_correlation_matrix(rng, n));
        Matrix gram(12, 12);
        for (int a = 0; a < 12; ++a)
          for (int b = 0; b < 12; ++b) gram(a, b) = kernel_b0_model(ks[a], ks[b], q);
        return min_eig_ratio(gram);
      }
      default: {
        KernelConfig cfg = random_scales(rng, opts);
        cfg.walk.alpha = 1 + static_cast<int>(rng() % 2);
        cfg.walk.beta = 1 + static_cast<int>(rng() % 2);
        cfg.walk.gamma = 3;
        RandomGraphSpec spec;
        spec.max_vertices = 7;
        spec.edge_probability = 0.35;
        std::vector<PointCloudGraph> gs;
        for (int j = 0; j < 20; ++j) gs.push_back(random_graph(rng, spec));
        return min_eig_ratio(gram_matrix(gs, cfg).values);
      }
    }
  }));

  rep.suites.push_back(run_suite("walk", full ? 50 : 20, 1e-10, w, [&](int i) {
    auto rng = case_rng(opts.seed, 4, i);
    KernelConfig cfg = random_scales(rng, opts);
    cfg.walk.gamma = 1 + i % 6;
    RandomGraphSpec spec;
    spec.max_vertices = 8;
    PointCloudGraph g = random_graph(rng, spec), h = random_graph(rng, spec);
    cfg.fault_flip_conditional = false;  // the reference has its own switch
    KernelConfig dp_cfg = cfg;
    dp_cfg.fault_flip_conditional = opts.inject_fault;
    return relative(dp_kernel(g, h, dp_cfg), walk_kernel_reference(g, h, cfg));
  }));

  // Relabeling invariance and exact argument symmetry share instances.
  std::vector<double> symmetry(full ? 50 : 20, 0.0);
  rep.suites.push_back(run_suite("isomorphism", static_cast<int>(symmetry.size()), 1e-12, w, [&](int i) {
    auto rng = case_rng(opts.seed, 5, i);
    KernelConfig cfg = random_scales(rng, opts);
    cfg.walk.alpha = 1 + static_cast<int>(rng() % 2);
    cfg.walk.beta = 1 + static_cast<int>(rng() % 3);
    cfg.walk.gamma = 1 + static_cast<int>(rng() % 4);
    RandomGraphSpec spec;
    spec.max_vertices = 8;
    spec.edge_probability = 0.35;
    PointCloudGraph g = random_graph(rng, spec), h = random_graph(rng, spec);
    PointCloudGraph gp = g.relabeled(random_permutation(rng, static_cast<int>(g.size())));
    PointCloudGraph hp = h.relabeled(random_permutation(rng, static_cast<int>(h.size())));
    const double base = dp_kernel(g, h, cfg);
    symmetry[i] = dp_kernel(h, g, cfg) == base ? 0.0 : 1.0;
    return std::abs(dp_kernel(gp, hp, cfg) - base) / std::max(std::abs(base), 1e-300);
  }));
  {
    SuiteResult s{"symmetry", static_cast<int>(symmetry.size()), 0, 0.0, 0.0};
    for (double e : symmetry) {
      s.failures += e > 0;
      s.worst = std::max(s.worst, e);
    }
    rep.suites.push_back(s);
  }

  rep.suites.push_back(run_suite("svm", full ? 20 : 10, 1e-6, w, [&](int i) {
    auto rng = case_rng(opts.seed, 6, i);
    const int n = 10;
    std::vector<std::vector<double>> pts(n);
    std::vector<int> y(n);
    for (int a = 0; a < n; ++a) {
      y[a] = a % 2 ? 1 : -1;
      for (int d = 0; d < 3; ++d) pts[a].push_back(standard_normal(rng) + 0.5 * y[a]);
    }
    Matrix k = rbf_baseline_gram(pts, pick_one(rng, {0.5, 1.0, 2.0}));
    const double c = pick_one(rng, {0.1, 1.0, 10.0, 100.0});
    std::vector<double> alpha = svm_solve_dual(k, y, c);
    return relative(svm_dual_objective(k, y, alpha, c), qp_reference_objective(k, y, c));
  }));
  return rep;
}

}  // namespace twk
