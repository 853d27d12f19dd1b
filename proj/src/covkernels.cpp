#include "twk/covkernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "twk/error.hpp"

namespace twk {

namespace {

void check_indices(const IndexSet& idx, Eigen::Index n, const char* what) {
  for (int i : idx)
    if (i < 0 || i >= n)
      throw InputError(std::string(what) + ": index " + std::to_string(i) + " out of range for size " +
                       std::to_string(n));
}

void check_disjoint(const IndexSet& c, const IndexSet& p, const char* what) {
  for (int i : c)
    if (std::find(p.begin(), p.end(), i) != p.end())
      throw InputError(std::string(what) + ": index sets overlap at " + std::to_string(i));
}

void check_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw InputError(std::string(what) + ": matrix is not square");
}

Eigen::LLT<Matrix> factor(const Matrix& m) {
  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("Cholesky factorization failed on a " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + " matrix");
  return llt;
}

double log_det_from(const Eigen::LLT<Matrix>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

IndexSet sorted_unique(IndexSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

IndexSet intersect(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

IndexSet difference(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

void KernelScaleParams::validate() const {
  if (!(tau >= 0)) throw InputError("tau must be >= 0");
  if (!(kappa > 0)) throw InputError("kappa must be > 0");
  if (!(upsilon >= 0)) throw InputError("upsilon must be >= 0");
}

// ---------------------------------------------------------------------------
// DecomposableModel

DecomposableModel::DecomposableModel(int n, std::vector<IndexSet> cliques, std::vector<int> parent)
    : n_(n), cliques_(std::move(cliques)), parent_(std::move(parent)) {
  if (n_ < 0) throw InputError("model: negative vertex count");
  if (cliques_.size() != parent_.size()) throw InputError("model: parent map size differs from clique count");
  if (n_ > 0 && cliques_.empty()) throw InputError("model: no cliques");
  const int m = static_cast<int>(cliques_.size());

  std::vector<int> seen(n_, 0);
  for (auto& c : cliques_) {
    if (c.empty()) throw InputError("model: empty clique");
    c = sorted_unique(std::move(c));
    for (int v : c) {
      if (v < 0 || v >= n_) throw InputError("model: clique vertex " + std::to_string(v) + " out of range");
      seen[v] = 1;
    }
  }
  for (int v = 0; v < n_; ++v)
    if (!seen[v]) throw InputError("model: vertex " + std::to_string(v) + " is in no clique");

  for (int c = 0; c < m; ++c) {
    int p = parent_[c];
    if (p == -1) {
      if (root_ != -1) throw InputError("model: more than one root clique");
      root_ = c;
    } else if (p < 0 || p >= m || p == c) {
      throw InputError("model: invalid parent for clique " + std::to_string(c));
    }
  }
  if (m > 0 && root_ == -1) throw InputError("model: junction tree has no root");
  // Every clique must reach the root without revisiting a clique.
  for (int c = 0; c < m; ++c) {
    int steps = 0, x = c;
    while (parent_[x] != -1) {
      x = parent_[x];
      if (++steps > m) throw InputError("model: junction tree contains a cycle");
    }
  }
  // Running intersection: for every vertex exactly one clique containing it
  // has a parent that does not.
  std::vector<int> tops(n_, 0);
  for (int c = 0; c < m; ++c) {
    const IndexSet* pc = parent_[c] == -1 ? nullptr : &cliques_[parent_[c]];
    for (int v : cliques_[c])
      if (!pc || !std::binary_search(pc->begin(), pc->end(), v)) ++tops[v];
  }
  for (int v = 0; v < n_; ++v)
    if (tops[v] != 1)
      throw InputError("model: running intersection fails for vertex " + std::to_string(v));

  separators_.resize(m);
  residuals_.resize(m);
  for (int c = 0; c < m; ++c) {
    if (parent_[c] != -1) separators_[c] = intersect(cliques_[c], cliques_[parent_[c]]);
    residuals_[c] = difference(cliques_[c], separators_[c]);
  }
}

DecomposableModel DecomposableModel::complete(int n) {
  IndexSet all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  return DecomposableModel(n, {all}, {-1});
}

DecomposableModel DecomposableModel::edgeless(int n) {
  std::vector<IndexSet> cl;
  std::vector<int> parent;
  for (int i = 0; i < n; ++i) {
    cl.push_back({i});
    parent.push_back(i == 0 ? -1 : 0);
  }
  return DecomposableModel(n, std::move(cl), std::move(parent));
}

DecomposableModel DecomposableModel::chain(int n) {
  if (n <= 1) return complete(n);
  std::vector<IndexSet> cl;
  std::vector<int> parent;
  for (int i = 0; i + 1 < n; ++i) {
    cl.push_back({i, i + 1});
    parent.push_back(i - 1);
  }
  return DecomposableModel(n, std::move(cl), std::move(parent));
}

std::vector<IndexSet> DecomposableModel::separators() const {
  std::vector<IndexSet> out;
  for (std::size_t c = 0; c < cliques_.size(); ++c)
    if (parent_[c] != -1) out.push_back(separators_[c]);
  return out;
}

DecomposableModel DecomposableModel::rerooted(int c) const {
  const int m = static_cast<int>(cliques_.size());
  if (c < 0 || c >= m) throw InputError("model: reroot target out of range");
  std::vector<std::vector<int>> nbr(m);
  for (int x = 0; x < m; ++x)
    if (parent_[x] != -1) {
      nbr[x].push_back(parent_[x]);
      nbr[parent_[x]].push_back(x);
    }
  std::vector<int> np(m, -2);
  np[c] = -1;
  std::vector<int> stack{c};
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (int y : nbr[x])
      if (np[y] == -2) {
        np[y] = x;
        stack.push_back(y);
      }
  }
  return DecomposableModel(n_, cliques_, np);
}

bool DecomposableModel::adjacent(int i, int j) const {
  for (const auto& c : cliques_)
    if (std::binary_search(c.begin(), c.end(), i) && std::binary_search(c.begin(), c.end(), j)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Base kernels

Matrix position_kernel_matrix(const PointCloudGraph& graph, const KernelScaleParams& params) {
  params.validate();
  if (graph.empty()) throw InputError("position kernel of an empty graph");
  const auto n = static_cast<Eigen::Index>(graph.size());
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0 + params.kappa;
    const auto& xi = graph.vertex(i).position;
    for (Eigen::Index j = 0; j < i; ++j) {
      const auto& xj = graph.vertex(j).position;
      double d2 = 0.0;
      for (std::size_t t = 0; t < xi.size(); ++t) d2 += (xi[t] - xj[t]) * (xi[t] - xj[t]);
      k(i, j) = k(j, i) = std::exp(-params.tau * d2);
    }
  }
  factor(k);  // throws when kappa is too small for this configuration
  return k;
}

double attribute_kernel(std::span<const double> a, std::span<const double> b, double upsilon) {
  if (a.size() != b.size())
    throw InputError("attribute_kernel: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-upsilon * d2);
}

double log_det_pd(const Matrix& m) {
  check_square(m, "log_det_pd");
  if (m.rows() == 0) return 0.0;
  return log_det_from(factor(m));
}

Matrix submatrix(const Matrix& m, const IndexSet& rows, const IndexSet& cols) {
  check_indices(rows, m.rows(), "submatrix");
  check_indices(cols, m.cols(), "submatrix");
  Matrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

double log_bhattacharyya(const Matrix& k, const Matrix& l) {
  check_square(k, "bhattacharyya");
  check_square(l, "bhattacharyya");
  if (k.rows() != l.rows())
    throw InputError("bhattacharyya: size mismatch (" + std::to_string(k.rows()) + " vs " +
                     std::to_string(l.rows()) + ")");
  return 0.5 * log_det_pd(k) + 0.5 * log_det_pd(l) - log_det_pd(0.5 * (k + l));
}

double bhattacharyya(const Matrix& k, const Matrix& l) { return std::exp(log_bhattacharyya(k, l)); }

Matrix conditional_covariance(const Matrix& k, const IndexSet& c, const IndexSet& p) {
  check_square(k, "conditional_covariance");
  check_indices(c, k.rows(), "conditional_covariance");
  check_indices(p, k.rows(), "conditional_covariance");
  check_disjoint(c, p, "conditional_covariance");
  Matrix kcc = submatrix(k, c);
  if (p.empty()) return kcc;
  Matrix kcp = submatrix(k, c, p);
  auto llt = factor(submatrix(k, p));
  Matrix out = kcc - kcp * llt.solve(kcp.transpose());
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Projections onto decomposable models

namespace {
void check_model(const Matrix& k, const DecomposableModel& model, const char* what) {
  check_square(k, what);
  if (k.rows() != model.size())
    throw InputError(std::string(what) + ": model has " + std::to_string(model.size()) +
                     " vertices, matrix has " + std::to_string(k.rows()));
}
}  // namespace

Matrix project_onto_model(const Matrix& k, const DecomposableModel& model) {
  check_model(k, model, "project_onto_model");
  const Eigen::Index n = k.rows();
  Matrix precision = Matrix::Zero(n, n);
  auto accumulate = [&](const IndexSet& idx, double sign) {
    if (idx.empty()) return;
    Matrix inv = factor(submatrix(k, idx)).solve(Matrix::Identity(idx.size(), idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) precision(idx[i], idx[j]) += sign * inv(i, j);
  };
  for (std::size_t c = 0; c < model.num_cliques(); ++c) {
    accumulate(model.clique(c), 1.0);
    accumulate(model.separator(c), -1.0);
  }
  Matrix out = factor(precision).solve(Matrix::Identity(n, n));
  return 0.5 * (out + out.transpose());
}

double logdet_projection(const Matrix& k, const DecomposableModel& model) {
  check_model(k, model, "logdet_projection");
  double s = 0.0;
  for (std::size_t c = 0; c < model.num_cliques(); ++c) {
    s += log_det_pd(submatrix(k, model.clique(c)));
    if (!model.separator(c).empty()) s -= log_det_pd(submatrix(k, model.separator(c)));
  }
  return s;
}

double logdet_projection_rooted(const Matrix& k, const DecomposableModel& model) {
  check_model(k, model, "logdet_projection_rooted");
  double s = 0.0;
  for (std::size_t c = 0; c < model.num_cliques(); ++c) {
    if (model.residual(c).empty()) continue;
    s += log_det_pd(conditional_covariance(k, model.residual(c), model.separator(c)));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Kernels on covariance matrices factorized over a model

double kernel_b0_model(const Matrix& k, const Matrix& l, const DecomposableModel& model) {
  check_model(k, model, "kernel_b0_model");
  check_model(l, model, "kernel_b0_model");
  double s = 0.0;
  for (std::size_t c = 0; c < model.num_cliques(); ++c) {
    s += log_bhattacharyya(submatrix(k, model.clique(c)), submatrix(l, model.clique(c)));
    const IndexSet& sep = model.separator(c);
    if (!sep.empty()) s -= log_bhattacharyya(submatrix(k, sep), submatrix(l, sep));
  }
  return std::exp(s);
}

double log_kernel_b_conditional(const Matrix& k, const IndexSet& ck, const IndexSet& pk,
                                const Matrix& l, const IndexSet& cl, const IndexSet& pl) {
  check_square(k, "kernel_b_conditional");
  check_square(l, "kernel_b_conditional");
  if (ck.size() != cl.size() || pk.size() != pl.size())
    throw InputError("kernel_b_conditional: K-side and L-side index sets differ in size");
  check_indices(ck, k.rows(), "kernel_b_conditional");
  check_indices(pk, k.rows(), "kernel_b_conditional");
  check_indices(cl, l.rows(), "kernel_b_conditional");
  check_indices(pl, l.rows(), "kernel_b_conditional");
  check_disjoint(ck, pk, "kernel_b_conditional");
  check_disjoint(cl, pl, "kernel_b_conditional");
  if (ck.empty()) return 0.0;

  const auto nc = static_cast<Eigen::Index>(ck.size());
  Matrix kc = submatrix(k, ck), lc = submatrix(l, cl);
  Matrix a = Matrix::Zero(nc, static_cast<Eigen::Index>(pk.size()));
  Matrix b = a;
  if (!pk.empty()) {
    Matrix kcp = submatrix(k, ck, pk), lcp = submatrix(l, cl, pl);
    a = factor(submatrix(k, pk)).solve(kcp.transpose()).transpose();
    b = factor(submatrix(l, pl)).solve(lcp.transpose()).transpose();
    kc -= a * kcp.transpose();
    lc -= b * lcp.transpose();
  }
  Matrix diff = a - b;
  Matrix denom = 0.5 * kc + 0.5 * lc + 0.25 * diff * diff.transpose();
  double log_denom = std::max(log_det_pd(denom), std::log(kConditionalDetFloor));
  return 0.5 * log_det_pd(kc) + 0.5 * log_det_pd(lc) - log_denom;
}

double kernel_b_conditional(const Matrix& k, const IndexSet& ck, const IndexSet& pk,
                            const Matrix& l, const IndexSet& cl, const IndexSet& pl) {
  return std::exp(log_kernel_b_conditional(k, ck, pk, l, cl, pl));
}

double log_kernel_b_model(const Matrix& k, const Matrix& l, const DecomposableModel& model) {
  check_model(k, model, "kernel_b_model");
  check_model(l, model, "kernel_b_model");
  double s = 0.0;
  for (std::size_t c = 0; c < model.num_cliques(); ++c)
    s += log_kernel_b_conditional(k, model.residual(c), model.separator(c), l, model.residual(c),
                                  model.separator(c));
  return s;
}

double kernel_b_model(const Matrix& k, const Matrix& l, const DecomposableModel& model) {
  return std::exp(log_kernel_b_model(k, l, model));
}

}  // namespace twk
