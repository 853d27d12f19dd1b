#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "twk/covkernels.hpp"
#include "twk/graph.hpp"
#include "twk/treewalk.hpp"

namespace twk {

struct KernelConfig {
  WalkParams walk;
  KernelScaleParams scales;
  bool normalize = false;
  /// Use chain windows (a vertex with up to beta-1 ancestors) as DP states
  /// while still allowing alpha children per node.
  bool reduced_patterns = false;
  std::size_t pattern_cap = 100000;
  /// Test-only mutation: flips the sign of the regression-coefficient
  /// difference inside the DP's conditional kernel.
  bool fault_flip_conditional = false;

  void validate() const;
};

struct BruteForceGuard {
  std::size_t max_vertices = 12;
  int max_gamma = 4;
};

/// Explicit sum over tree structures and labelling pairs. Each matched pair of
/// tree-walks is counted once.
double brute_force_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg,
                          BruteForceGuard guard = {});

/// Brute-force sum restricted to tree-walks of at most `depth` generations
/// whose top beta generations equal `r0` in g and `s0` in h (as unordered
/// labelled patterns).
double brute_force_restricted_kernel(const PointCloudGraph& g, const PointCloudGraph& h,
                                     const SubtreePattern& r0, const SubtreePattern& s0, int depth,
                                     const KernelConfig& cfg, BruteForceGuard guard = {});

/// Per-graph data shared by every pair involving that graph: patterns, the
/// extension tuples and the position-kernel blocks they need. Depends on
/// alpha, beta, tau, kappa, the pattern mode and the cap of `cfg`.
class PreparedGraph {
 public:
  PreparedGraph(const PointCloudGraph& g, const KernelConfig& cfg);
  ~PreparedGraph();
  PreparedGraph(PreparedGraph&&) noexcept;
  PreparedGraph& operator=(PreparedGraph&&) noexcept;

  const PointCloudGraph& graph() const;
  std::size_t state_count() const;

  struct Impl;
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Kernel values for every depth 1..gamma_max (inner index) and every entry
/// of `nus` (outer index), with lambda from `cfg`.
using KernelProfile = std::vector<std::vector<double>>;

KernelProfile dp_kernel_profile(const PreparedGraph& g, const PreparedGraph& h, const KernelConfig& cfg,
                                int gamma_max, std::span<const double> nus);

/// Same for several attribute bandwidths at once (outermost index); the
/// position-kernel work is shared between them.
std::vector<KernelProfile> dp_kernel_profile(const PreparedGraph& g, const PreparedGraph& h,
                                             const KernelConfig& cfg, int gamma_max,
                                             std::span<const double> nus,
                                             std::span<const double> upsilons);

double dp_kernel(const PreparedGraph& g, const PreparedGraph& h, const KernelConfig& cfg);
double dp_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const KernelConfig& cfg);

/// Contribution of the tree-walks rooted at the pattern pair (r0, s0) with at
/// most `depth` generations; 0 when the patterns are not equivalent.
double dp_restricted_kernel(const PointCloudGraph& g, const PointCloudGraph& h, const SubtreePattern& r0,
                            const SubtreePattern& s0, int depth, const KernelConfig& cfg);

struct GramMatrix {
  Matrix values;
  std::vector<std::string> ids;
  std::vector<int> labels;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

/// k(i,j) / sqrt(k(i,i) k(j,j)); zero rows stay zero.
Matrix cosine_normalize(const Matrix& k);

/// Called with (pairs done, pairs total); calls are serialized.
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

/// All pairwise dp_kernel values, computed on up to `workers` threads. The
/// output does not depend on the worker count.
GramMatrix gram_matrix(std::span<const PointCloudGraph> graphs, const KernelConfig& cfg, int workers = 1,
                       std::vector<std::string> ids = {}, std::vector<int> labels = {},
                       const ProgressFn& progress = {});

/// Gram matrices indexed [upsilon][nu][gamma-1] sharing one precomputation
/// per graph pair. Normalized when cfg.normalize.
using GramProfile = std::vector<std::vector<std::vector<Matrix>>>;
GramProfile gram_profile(std::span<const PointCloudGraph> graphs, const KernelConfig& cfg, int gamma_max,
                         std::span<const double> nus, std::span<const double> upsilons, int workers = 1,
                         const ProgressFn& progress = {});

/// Runs fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
/// the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string format_gram(const GramMatrix& gram);
GramMatrix parse_gram(const std::string& text);
void save_gram(const GramMatrix& gram, const std::filesystem::path& path);
GramMatrix load_gram(const std::filesystem::path& path);

}  // namespace twk
