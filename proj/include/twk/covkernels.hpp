#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "twk/graph.hpp"

namespace twk {

using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<int>;

struct KernelScaleParams {
  double tau = 0.05;      // bandwidth on positions
  double kappa = 0.001;   // ridge added to the position kernel diagonal
  double upsilon = 0.05;  // bandwidth on attributes

  void validate() const;
};

/// Decomposable graphical model described by its cliques and a rooted
/// junction tree over them.
///
/// parent(c) is the index of the parent clique, or -1 for the root. The
/// separator of a non-root clique is its intersection with the parent clique;
/// the root's separator is empty. Cliques need not be maximal.
class DecomposableModel {
 public:
  DecomposableModel(int n, std::vector<IndexSet> cliques, std::vector<int> parent);

  static DecomposableModel complete(int n);
  static DecomposableModel edgeless(int n);
  /// Path 0-1-...-(n-1); cliques {i,i+1} rooted at {0,1}.
  static DecomposableModel chain(int n);

  int size() const { return n_; }
  int root() const { return root_; }
  std::size_t num_cliques() const { return cliques_.size(); }
  const IndexSet& clique(std::size_t c) const { return cliques_[c]; }
  const std::vector<IndexSet>& cliques() const { return cliques_; }
  int parent(std::size_t c) const { return parent_[c]; }
  const IndexSet& separator(std::size_t c) const { return separators_[c]; }
  /// clique(c) minus separator(c).
  const IndexSet& residual(std::size_t c) const { return residuals_[c]; }
  /// Non-root separators, one per junction-tree edge.
  std::vector<IndexSet> separators() const;
  /// Same cliques, junction tree re-rooted at clique `c`.
  DecomposableModel rerooted(int c) const;
  /// True when (i, j) lie together in some clique.
  bool adjacent(int i, int j) const;

 private:
  int n_ = 0;
  int root_ = -1;
  std::vector<IndexSet> cliques_;
  std::vector<int> parent_;
  std::vector<IndexSet> separators_;
  std::vector<IndexSet> residuals_;
};

/// n x n matrix exp(-tau |x_i - x_j|^2) + kappa [i == j]; throws
/// NotPositiveDefinite when the result fails Cholesky.
Matrix position_kernel_matrix(const PointCloudGraph& graph, const KernelScaleParams& params);

double attribute_kernel(std::span<const double> a, std::span<const double> b, double upsilon);

/// log|M| through Cholesky of (M + M^T)/2.
double log_det_pd(const Matrix& m);

Matrix submatrix(const Matrix& m, const IndexSet& rows, const IndexSet& cols);
inline Matrix submatrix(const Matrix& m, const IndexSet& idx) { return submatrix(m, idx, idx); }

/// |K|^{1/2} |L|^{1/2} |(K+L)/2|^{-1}, evaluated in log space.
double bhattacharyya(const Matrix& k, const Matrix& l);
double log_bhattacharyya(const Matrix& k, const Matrix& l);

/// Schur complement K_{C,C} - K_{C,P} K_{P,P}^{-1} K_{P,C}.
Matrix conditional_covariance(const Matrix& k, const IndexSet& c, const IndexSet& p);

/// Closest covariance (in KL) that factorizes over `model`.
Matrix project_onto_model(const Matrix& k, const DecomposableModel& model);

/// sum_C log|K_C| - sum_S log|K_S|.
double logdet_projection(const Matrix& k, const DecomposableModel& model);
/// sum over cliques of log|K_{R|S}|, R = residual, S = separator.
double logdet_projection_rooted(const Matrix& k, const DecomposableModel& model);

/// prod_C k_B(K_C, L_C) / prod_S k_B(K_S, L_S).
double kernel_b0_model(const Matrix& k, const Matrix& l, const DecomposableModel& model);

/// Kernel between the conditional Gaussians of Z_C given Z_P under K and L:
///
///   |K_{C|P}|^{1/2} |L_{C|P}|^{1/2} / |K_{C|P}/2 + L_{C|P}/2 + (A - B)(A - B)^T / 4|
///
/// with A = K_{C,P} K_P^{-1}, B = L_{C,P} L_P^{-1}. Empty P gives the plain
/// Bhattacharyya kernel of K_C and L_C. The K-side and L-side index sets may
/// differ but must have matching sizes.
double kernel_b_conditional(const Matrix& k, const IndexSet& ck, const IndexSet& pk,
                            const Matrix& l, const IndexSet& cl, const IndexSet& pl);
inline double kernel_b_conditional(const Matrix& k, const Matrix& l, const IndexSet& c,
                                   const IndexSet& p) {
  return kernel_b_conditional(k, c, p, l, c, p);
}
double log_kernel_b_conditional(const Matrix& k, const IndexSet& ck, const IndexSet& pk,
                                const Matrix& l, const IndexSet& cl, const IndexSet& pl);

/// prod over cliques of the conditional kernel of (residual | separator); the
/// root clique contributes k_B(K_R, L_R).
double kernel_b_model(const Matrix& k, const Matrix& l, const DecomposableModel& model);
double log_kernel_b_model(const Matrix& k, const Matrix& l, const DecomposableModel& model);

/// Floor applied to the denominator determinant of the conditional kernel.
inline constexpr double kConditionalDetFloor = 1e-300;

}  // namespace twk
