#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "oracles.hpp"
#include "twk/engine.hpp"
#include "twk/error.hpp"

using namespace twk;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

KernelConfig config(int alpha, int beta, int gamma) {
  KernelConfig c;
  c.walk = {alpha, beta, gamma, 0.8, 0.3};
  c.scales = {0.3, 0.05, 0.2};
  return c;
}

// A path of n vertices drifting to the right, with two chords.
PointCloudGraph chain_like(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0, 1.5);
  std::vector<Vertex> vs(n);
  std::vector<Edge> es;
  double x = 0, y = 0;
  for (int i = 0; i < n; ++i) {
    x += d(rng) + 2;
    y += d(rng);
    vs[i] = {{x, y}, {x - 10, y}};
    if (i) es.emplace_back(i - 1, i);
  }
  es.emplace_back(2, 7);
  es.emplace_back(10, 15);
  return PointCloudGraph(std::move(vs), std::move(es));
}

}  // namespace

TEST_CASE("kernel configuration is validated") {
  KernelConfig c;
  CHECK_NOTHROW(c.validate());
  c.scales.kappa = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.walk.gamma = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.pattern_cap = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("brute force on empty graphs is zero") {
  std::mt19937_64 rng(1);
  PointCloudGraph g = oracle::random_graph(rng, 3, 0.5);
  CHECK(brute_force_kernel(PointCloudGraph(), g, config(1, 1, 2)) == 0.0);
  CHECK(brute_force_kernel(g, PointCloudGraph(), config(1, 1, 2)) == 0.0);
  CHECK(dp_kernel(g, PointCloudGraph(), config(2, 2, 3)) == 0.0);
}

TEST_CASE("single-node tree-walks sum the attribute kernel") {
  std::mt19937_64 rng(2);
  PointCloudGraph g = oracle::random_graph(rng, 4, 0.5), h = oracle::random_graph(rng, 5, 0.5);
  KernelConfig c = config(1, 1, 1);
  double expect = 0.0;
  for (std::size_t v = 0; v < g.size(); ++v)
    for (std::size_t w = 0; w < h.size(); ++w)
      expect += std::exp(-c.scales.upsilon * oracle::sqdist(g.vertex(v).attribute, h.vertex(w).attribute));
  expect *= c.walk.lambda * c.walk.nu;
  CHECK(brute_force_kernel(g, h, c) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(dp_kernel(g, h, c) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("brute force is symmetric and guarded") {
  std::mt19937_64 rng(3);
  PointCloudGraph g = oracle::random_graph(rng, 5, 0.5), h = oracle::random_graph(rng, 4, 0.5);
  KernelConfig c = config(2, 2, 3);
  CHECK(rel(brute_force_kernel(g, h, c), brute_force_kernel(h, g, c)) < 1e-12);
  PointCloudGraph big = oracle::random_graph(rng, 13, 0.2);
  CHECK_THROWS_AS(brute_force_kernel(big, g, c), GuardExceeded);
  CHECK_THROWS_AS(brute_force_kernel(g, h, config(1, 1, 5)), GuardExceeded);
  CHECK_NOTHROW(brute_force_kernel(g, h, config(1, 1, 5), BruteForceGuard{12, 5}));
}

TEST_CASE("dynamic programme matches brute force") {
  std::mt19937_64 rng(4);
  int cases = 0;
  for (int reduced = 0; reduced < 2; ++reduced)
    for (int alpha = 1; alpha <= 2; ++alpha)
      for (int beta = 1; beta <= 3; ++beta)
        for (int gamma = 1; gamma <= 3; ++gamma)
          for (int t = 0; t < 2; ++t) {
            PointCloudGraph g = oracle::random_graph(rng, 2 + t * 3, 0.5);
            PointCloudGraph h = oracle::random_graph(rng, 3 + t * 2, 0.5);
            KernelConfig c = config(alpha, beta, gamma);
            c.reduced_patterns = reduced;
            CAPTURE(reduced);
            CAPTURE(alpha);
            CAPTURE(beta);
            CAPTURE(gamma);
            CHECK(rel(dp_kernel(g, h, c), brute_force_kernel(g, h, c)) < 1e-8);
            ++cases;
          }
  CHECK(cases == 72);
}

TEST_CASE("arity 1, order 1 matches an enumerated walk kernel") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 12; ++t) {
    PointCloudGraph g = oracle::random_graph(rng, 4, 0.6), h = oracle::random_graph(rng, 4, 0.6);
    KernelConfig c = config(1, 1, 1 + t % 5);
    const double walk = oracle::walk_kernel(g, h, c.walk.gamma, c.walk.lambda, c.walk.nu, c.scales.tau,
                                            c.scales.kappa, c.scales.upsilon);
    CHECK(rel(dp_kernel(g, h, c), walk) < 1e-10);
  }
}

TEST_CASE("restricted kernel") {
  std::mt19937_64 rng(6);
  PointCloudGraph g = oracle::random_graph(rng, 5, 0.6), h = oracle::random_graph(rng, 5, 0.6);
  for (int alpha = 1; alpha <= 2; ++alpha)
    for (int beta = 1; beta <= 2; ++beta) {
      KernelConfig c = config(alpha, beta, 3);
      auto pg = build_patterns(g, alpha, beta), ph = build_patterns(h, alpha, beta);
      int compared = 0;
      for (std::size_t a = 0; a < pg.size(); a += 3)
        for (std::size_t b = 0; b < ph.size(); b += 2) {
          if (!tree_equivalent(pg[a], ph[b])) {
            CHECK(dp_restricted_kernel(g, h, pg[a], ph[b], 3, c) == 0.0);
            continue;
          }
          for (int depth = 1; depth <= 3; ++depth) {
            const double bf = brute_force_restricted_kernel(g, h, pg[a], ph[b], depth, c);
            CHECK(rel(dp_restricted_kernel(g, h, pg[a], ph[b], depth, c), bf) < 1e-8);
            ++compared;
          }
        }
      CHECK(compared > 0);
    }
}

TEST_CASE("restricted kernel at exhausted depth is the base term") {
  std::mt19937_64 rng(7);
  PointCloudGraph g = oracle::random_graph(rng, 4, 0.7), h = oracle::random_graph(rng, 4, 0.7);
  KernelConfig c = config(1, 1, 1);
  auto pg = build_patterns(g, 1, 1), ph = build_patterns(h, 1, 1);
  const int v = pg[0].root(), w = ph[0].root();
  // One node: lambda nu k_A k_B with k_B = 1 for equal 1x1 diagonals.
  const double base = c.walk.lambda * c.walk.nu *
                      std::exp(-c.scales.upsilon * oracle::sqdist(g.vertex(v).attribute, h.vertex(w).attribute));
  CHECK(dp_restricted_kernel(g, h, pg[0], ph[0], 1, c) == doctest::Approx(base).epsilon(1e-12));
  CHECK(dp_restricted_kernel(g, h, pg[0], ph[0], 0, c) == 0.0);
}

TEST_CASE("kernel invariants on random pairs") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    PointCloudGraph g = oracle::random_graph(rng, 1 + t % 7, 0.45), h = oracle::random_graph(rng, 2 + t % 5, 0.45);
    KernelConfig c = config(1 + t % 2, 1 + t % 3, 1 + t % 4);
    const double v = dp_kernel(g, h, c);
    CHECK(dp_kernel(h, g, c) == v);  // exact
    CHECK(dp_kernel(g, g, c) > 0.0);
    // Relabeling either graph.
    PointCloudGraph gp = g.relabeled(oracle::random_perm(rng, static_cast<int>(g.size())));
    PointCloudGraph hp = h.relabeled(oracle::random_perm(rng, static_cast<int>(h.size())));
    CHECK(std::abs(dp_kernel(gp, hp, c) - v) <= 1e-12 * std::abs(v));
    // Growing the depth never lowers the value.
    double prev = 0.0;
    for (int gamma = 1; gamma <= 5; ++gamma) {
      c.walk.gamma = gamma;
      const double x = dp_kernel(g, h, c);
      CHECK(x >= prev * (1 - 1e-12));  // equal up to summation order when nothing new fits
      prev = x;
    }
  }
}

TEST_CASE("profiles agree with single evaluations") {
  std::mt19937_64 rng(9);
  PointCloudGraph g = oracle::random_graph(rng, 6, 0.5), h = oracle::random_graph(rng, 5, 0.5);
  KernelConfig c = config(2, 2, 4);
  PreparedGraph pg(g, c), ph(h, c);
  std::vector<double> nus{0.3, 0.05}, ups{0.2, 0.9};
  auto prof = dp_kernel_profile(pg, ph, c, 4, nus, ups);
  for (std::size_t u = 0; u < ups.size(); ++u)
    for (std::size_t n = 0; n < nus.size(); ++n)
      for (int gamma = 1; gamma <= 4; ++gamma) {
        KernelConfig d = c;
        d.walk.gamma = gamma;
        d.walk.nu = nus[n];
        d.scales.upsilon = ups[u];
        CHECK(prof[u][n][gamma - 1] == doctest::Approx(dp_kernel(g, h, d)).epsilon(1e-13));
      }
}

TEST_CASE("arity 1, order 4 on 18-vertex chain-like graphs is fast") {
  std::mt19937_64 rng(10);
  PointCloudGraph g = chain_like(rng, 18), h = chain_like(rng, 18);
  KernelConfig c;
  c.walk = {1, 4, 24, 1.0, 0.1};
  auto t0 = std::chrono::steady_clock::now();
  const double v = dp_kernel(g, h, c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("alpha 1 beta 4 gamma 24 pair: " << secs << " s");
  CHECK(v > 0.0);
  CHECK(secs < 1.0);
}

TEST_CASE("pattern cap propagates") {
  std::mt19937_64 rng(11);
  PointCloudGraph g = oracle::random_graph(rng, 8, 0.9);
  KernelConfig c = config(2, 3, 2);
  c.pattern_cap = 10;
  CHECK_THROWS_AS(dp_kernel(g, g, c), GuardExceeded);
}

TEST_CASE("gram matrix") {
  std::mt19937_64 rng(12);
  std::vector<PointCloudGraph> gs;
  for (int i = 0; i < 20; ++i) gs.push_back(oracle::random_graph(rng, 1 + i % 6, 0.4));
  KernelConfig c = config(1, 2, 3);
  GramMatrix k = gram_matrix(gs, c, 1);
  REQUIRE(k.size() == 20);
  CHECK((k.values - k.values.transpose()).norm() == 0.0);
  CHECK(oracle::min_eigenvalue(k.values) >= -1e-8 * k.values.trace());
  CHECK(k.values(3, 7) == dp_kernel(gs[3], gs[7], c));

  // Worker count does not change a single bit.
  GramMatrix k3 = gram_matrix(gs, c, 3);
  CHECK(format_gram(k3) == format_gram(k));

  // Permuting the dataset permutes rows and columns.
  auto perm = oracle::random_perm(rng, 20);
  std::vector<PointCloudGraph> shuffled(20);
  for (int i = 0; i < 20; ++i) shuffled[perm[i]] = gs[i];
  GramMatrix ks = gram_matrix(shuffled, c, 2);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) CHECK(ks.values(perm[i], perm[j]) == k.values(i, j));

  c.normalize = true;
  GramMatrix kn = gram_matrix(gs, c, 2);
  for (int i = 0; i < 20; ++i) CHECK(kn.values(i, i) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(kn.values(2, 5) == doctest::Approx(k.values(2, 5) / std::sqrt(k.values(2, 2) * k.values(5, 5))));
}

TEST_CASE("gram failures name the failing graph") {
  std::mt19937_64 rng(13);
  std::vector<PointCloudGraph> gs{oracle::random_graph(rng, 3, 0.5), oracle::random_graph(rng, 3, 0.5),
                                  PointCloudGraph({{{0, 0}, {0, 0}}, {{0, 0}, {0, 0}}}, {{0, 1}})};
  KernelConfig c = config(1, 1, 2);
  c.scales.tau = 0.0;
  c.scales.kappa = 1e-300;
  CHECK_THROWS_WITH(gram_matrix(gs, c, 2), doctest::Contains("graph 0"));
  c.scales.tau = 0.3;
  CHECK_THROWS_WITH(gram_matrix(gs, c, 2), doctest::Contains("graph 2"));
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  for (int workers : {1, 4}) {
    try {
      parallel_for(50, workers, [](std::size_t i) {
        if (i == 17 || i == 31) throw std::runtime_error("at " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "at 17");
    }
  }
  std::vector<int> hit(100, 0);
  parallel_for(100, 3, [&](std::size_t i) { hit[i] += 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 100);
}

TEST_CASE("gram file format") {
  GramMatrix g;
  g.values = Matrix(2, 2);
  g.values << 1.0, 0.1 + 0.2, 0.1 + 0.2, 2.0;
  g.labels = {3, 7};
  const std::string text = format_gram(g);
  CHECK(text == "gram 1 2\n1 0.30000000000000004\n0.30000000000000004 2\nlabels 3 7\n");
  GramMatrix back = parse_gram(text);
  CHECK(back.values == g.values);
  CHECK(back.labels == g.labels);

  GramMatrix unlabeled;
  unlabeled.values = Matrix::Identity(2, 2);
  CHECK(format_gram(unlabeled).find("labels -1 -1") != std::string::npos);

  CHECK_THROWS_AS(parse_gram(""), InputError);
  CHECK_THROWS_AS(parse_gram("gram 1 2\n1 0\n0 1\n"), InputError);
  CHECK_THROWS_AS(parse_gram("gram 1 2\n1 0\n0\nlabels 1 2\n"), InputError);
  CHECK_THROWS_AS(parse_gram("gram 1 1\n1\nlabels 1\nextra\n"), InputError);

  auto path = std::filesystem::temp_directory_path() / "twk_gram_roundtrip.txt";
  save_gram(g, path);
  CHECK(load_gram(path).values == g.values);
  std::filesystem::remove(path);
}
