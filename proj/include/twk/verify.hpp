#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "twk/covkernels.hpp"
#include "twk/engine.hpp"
#include "twk/graph.hpp"

namespace twk {

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(std::mt19937_64& rng);
double standard_normal(std::mt19937_64& rng);

struct RandomGraphSpec {
  int min_vertices = 1;
  int max_vertices = 6;
  double edge_probability = 0.5;
  double extent = 4.0;  // positions uniform in [0, extent]^2
  int attr_dim = 2;     // attributes uniform in [-1, 1]
};

PointCloudGraph random_graph(std::mt19937_64& rng, const RandomGraphSpec& spec);
std::vector<int> random_permutation(std::mt19937_64& rng, int n);

/// A A^T / n + 0.2 I with Gaussian A.
Matrix random_pd_matrix(std::mt19937_64& rng, int n);
/// random_pd_matrix rescaled to unit diagonal.
Matrix random_correlation_matrix(std::mt19937_64& rng, int n);

/// Cliques grown one at a time, each attached to a random earlier clique
/// through a random subset of it, over a random vertex order.
DecomposableModel random_decomposable_model(std::mt19937_64& rng, int n, int max_clique = 4);
/// Tree-shaped model: cliques are the edges of a random spanning tree.
DecomposableModel random_tree_model(std::mt19937_64& rng, int n);

/// Walk kernel for arity 1 and distinctness order 1, written as a recursion
/// over pairs of directed edges with closed-form 1x1 and 2x2 kernels.
double walk_kernel_reference(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg);

/// Optimal 2-norm SVM dual objective found by trying every support set.
/// Exponential in the number of points.
double qp_reference_objective(const Matrix& k, std::span<const int> y, double c);

struct VerifyOptions {
  bool full = false;
  std::uint64_t seed = 1;
  int workers = 1;
  bool inject_fault = false;  // run the kernel suites with the DP mutation on
};

struct SuiteResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;  // largest observed error measure
  double tolerance = 0.0;
};

struct VerifyReport {
  std::vector<SuiteResult> suites;

  bool passed() const;
  std::string format() const;
};

VerifyReport run_verify(const VerifyOptions& opts);

}  // namespace twk
