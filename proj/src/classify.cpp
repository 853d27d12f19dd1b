#include "twk/classify.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <random>
#include <iterator>
#include <map>
#include <set>

#include "twk/engine.hpp"
#include "twk/error.hpp"

namespace twk {

namespace {
constexpr double kTau = 1e-12;
}

bool is_psd(const Matrix& k, double tolerance) {
  if (k.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tolerance * std::abs(k.trace());
}

double svm_dual_objective(const Matrix& k, std::span<const int> y, std::span<const double> alpha, double c) {
  const std::size_t n = y.size();
  const double ridge = 1.0 / (2.0 * c);
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin += alpha[i];
    for (std::size_t j = 0; j < n; ++j)
      quad += alpha[i] * alpha[j] * y[i] * y[j] * (k(i, j) + (i == j ? ridge : 0.0));
  }
  return lin - 0.5 * quad;
}

std::vector<double> svm_solve_dual(const Matrix& k, std::span<const int> y, double c, const SvmOptions& opts,
                                   long* iterations, bool* converged) {
  if (!(c > 0)) throw InputError("C must be > 0");
  const std::size_t n = y.size();
  if (static_cast<std::size_t>(k.rows()) != n || static_cast<std::size_t>(k.cols()) != n)
    throw InputError("svm: Gram size does not match target count");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw InputError("svm targets must be +1 or -1");
    (v == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) throw InputError("svm training needs both classes");

  const double ridge = 1.0 / (2.0 * c);
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * (k(i, j) + (i == j ? ridge : 0.0)); };
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  long it = 0;
  bool done = false;
  for (; it < opts.max_iterations; ++it) {
    // Maximal violating pair with second-order choice of the partner.
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = gmax;
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (-grad[t] > gmax) { gmax = -grad[t]; i = t; }
      } else if (alpha[t] > 0 && grad[t] > gmax) {
        gmax = grad[t];
        i = t;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!(alpha[t] > 0)) continue;
        gmax2 = std::max(gmax2, grad[t]);
        double diff = gmax + grad[t];
        if (diff > 0) {
          double a = q(i, i) + q(t, t) - 2.0 * y[i] * q(i, t);
          double obj = -diff * diff / (a > 0 ? a : kTau);
          if (obj < best) { best = obj; j = t; }
        }
      } else {
        gmax2 = std::max(gmax2, -grad[t]);
        double diff = gmax - grad[t];
        if (diff > 0) {
          double a = q(i, i) + q(t, t) + 2.0 * y[i] * q(i, t);
          double obj = -diff * diff / (a > 0 ? a : kTau);
          if (obj < best) { best = obj; j = t; }
        }
      }
    }
    if (gmax + gmax2 < opts.tolerance || j == n) {
      done = true;
      break;
    }
    const double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      double a = q(i, i) + q(j, j) + 2.0 * q(i, j);
      double delta = (-grad[i] - grad[j]) / (a > 0 ? a : kTau);
      double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
    } else {
      double a = q(i, i) + q(j, j) - 2.0 * q(i, j);
      double delta = (grad[i] - grad[j]) / (a > 0 ? a : kTau);
      double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }
  if (iterations) *iterations = it;
  if (converged) *converged = done;
  return alpha;
}

double SvmModel::decision(std::span<const double> krow) const {
  double f = bias;
  for (std::size_t s = 0; s < support.size(); ++s) f += coef[s] * krow[support[s]];
  return f;
}

SvmModel svm_train(const Matrix& gram, std::span<const int> train, std::span<const int> y, double c,
                   const SvmOptions& opts) {
  if (train.size() != y.size()) throw InputError("svm: index and target counts differ");
  for (int i : train)
    if (i < 0 || i >= gram.rows()) throw InputError("svm: training index out of range");
  const std::size_t n = train.size();
  Matrix k(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) k(a, b) = gram(train[a], train[b]);
  if (opts.check_psd && !is_psd(k, opts.psd_tolerance))
    throw InputError("svm: training Gram is not positive semidefinite within tolerance");

  SvmModel m;
  m.c = c;
  m.positive = 1;
  m.negative = -1;
  std::vector<double> alpha = svm_solve_dual(k, y, c, opts, &m.iterations, &m.converged);
  m.objective = svm_dual_objective(k, y, alpha, c);

  // Bias from the margin condition y_t f(x_t) = 1 on the modified kernel.
  const double ridge = 1.0 / (2.0 * c);
  double bsum = 0.0;
  int bcount = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!(alpha[t] > 0)) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (alpha[i] > 0) s += alpha[i] * y[i] * (k(i, t) + (i == t ? ridge : 0.0));
    bsum += y[t] - s;
    ++bcount;
  }
  m.bias = bcount ? bsum / bcount : 0.0;
  for (std::size_t t = 0; t < n; ++t)
    if (alpha[t] > 0) {
      m.support.push_back(train[t]);
      m.coef.push_back(alpha[t] * y[t]);
    }
  return m;
}

OvoModel ovo_train(const Matrix& gram, std::span<const int> train, std::span<const int> labels, double c,
                   const SvmOptions& opts) {
  if (train.size() != labels.size()) throw InputError("ovo: index and label counts differ");
  OvoModel m;
  std::set<int> cls(labels.begin(), labels.end());
  m.classes.assign(cls.begin(), cls.end());
  for (std::size_t a = 0; a < m.classes.size(); ++a)
    for (std::size_t b = a + 1; b < m.classes.size(); ++b) {
      std::vector<int> idx, y;
      for (std::size_t t = 0; t < train.size(); ++t) {
        if (labels[t] == m.classes[a]) { idx.push_back(train[t]); y.push_back(1); }
        else if (labels[t] == m.classes[b]) { idx.push_back(train[t]); y.push_back(-1); }
      }
      SvmModel s = svm_train(gram, idx, y, c, opts);
      s.positive = m.classes[a];
      s.negative = m.classes[b];
      m.models.push_back(std::move(s));
    }
  return m;
}

OvoDecision ovo_predict(const OvoModel& model, std::span<const double> krow) {
  OvoDecision d;
  const std::size_t nc = model.classes.size();
  if (nc == 0) throw InputError("ovo: model has no classes");
  d.votes.assign(nc, 0);
  d.margins.assign(nc, 0.0);
  auto pos = [&](int cls) {
    return static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), cls) -
                                    model.classes.begin());
  };
  for (const auto& s : model.models) {
    const double f = s.decision(krow);
    const std::size_t a = pos(s.positive), b = pos(s.negative);
    ++d.votes[f >= 0 ? a : b];
    d.margins[a] += f;
    d.margins[b] -= f;
    ++d.decisions;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < nc; ++i)
    if (d.votes[i] > d.votes[best] || (d.votes[i] == d.votes[best] && d.margins[i] > d.margins[best])) best = i;
  d.label = model.classes[best];
  return d;
}

Matrix rbf_baseline_gram(std::span<const std::vector<double>> vectors, double sigma) {
  if (!(sigma > 0)) throw InputError("RBF bandwidth must be > 0");
  const std::size_t n = vectors.size();
  for (const auto& v : vectors)
    if (v.size() != vectors[0].size()) throw InputError("RBF inputs must have equal length");
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t t = 0; t < vectors[i].size(); ++t) {
        double d = vectors[i][t] - vectors[j][t];
        d2 += d * d;
      }
      k(i, j) = k(j, i) = std::exp(-d2 / (2.0 * sigma * sigma));
    }
  }
  return k;
}

std::vector<int> stratified_folds(std::span<const int> labels, std::span<const int> items, int folds,
                                  std::uint64_t seed) {
  if (folds < 2) throw InputError("need at least 2 folds");
  if (items.size() < static_cast<std::size_t>(folds))
    throw InputError("fold too small for stratification: " + std::to_string(items.size()) + " items, " +
                     std::to_string(folds) + " folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t p = 0; p < items.size(); ++p) by_class[labels[items[p]]].push_back(p);
  std::mt19937_64 rng(seed);
  std::vector<int> fold(items.size(), -1);
  std::size_t dealt = 0;
  for (auto& [cls, members] : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng() % i]);
    for (std::size_t p : members) fold[p] = static_cast<int>(dealt++ % folds);
  }
  return fold;
}

bool LabelAudit::clean() const {
  for (std::size_t f = 0; f < selection_reads.size() && f < test_items.size(); ++f) {
    std::vector<int> both;
    std::set_intersection(selection_reads[f].begin(), selection_reads[f].end(), test_items[f].begin(),
                          test_items[f].end(), std::back_inserter(both));
    if (!both.empty()) return false;
  }
  return true;
}

namespace {

double error_rate(const Matrix& gram, std::span<const int> train, std::span<const int> train_labels,
                  std::span<const int> test, std::span<const int> test_labels, double c, const SvmOptions& opts) {
  if (test.empty()) return 0.0;
  OvoModel m = ovo_train(gram, train, train_labels, c, opts);
  int wrong = 0;
  for (std::size_t t = 0; t < test.size(); ++t) {
    const double* row = gram.data() + static_cast<std::ptrdiff_t>(test[t]) * gram.rows();  // symmetric
    std::span<const double> krow(row, static_cast<std::size_t>(gram.rows()));
    int pred = m.classes.size() == 1 ? m.classes[0] : ovo_predict(m, krow).label;
    wrong += pred != test_labels[t];
  }
  return static_cast<double>(wrong) / static_cast<double>(test.size());
}

}  // namespace

CvResult nested_cv(std::span<const KernelCandidate> candidates, std::span<const int> labels, const CvPlan& plan,
                   LabelAudit* audit, const SvmOptions& opts) {
  if (candidates.empty()) throw InputError("nested_cv: no kernel candidates");
  if (plan.c_grid.empty()) throw InputError("nested_cv: empty C grid");
  const std::size_t n = labels.size();
  for (const auto& cand : candidates) {
    if (!cand.gram || static_cast<std::size_t>(cand.gram->rows()) != n)
      throw InputError("nested_cv: candidate '" + cand.label + "' has a Gram of the wrong size");
    if (opts.check_psd && !is_psd(*cand.gram, opts.psd_tolerance))
      throw InputError("nested_cv: candidate '" + cand.label + "' is not positive semidefinite");
  }
  SvmOptions inner_opts = opts;
  inner_opts.check_psd = false;  // checked once per candidate above

  std::vector<int> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
  std::vector<int> outer = stratified_folds(labels, all, plan.outer_folds, plan.seed);
  if (audit) {
    audit->selection_reads.assign(plan.outer_folds, {});
    audit->test_items.assign(plan.outer_folds, {});
  }

  CvResult res;
  for (int f = 0; f < plan.outer_folds; ++f) {
    std::vector<int> train, test;
    for (std::size_t i = 0; i < n; ++i) (outer[i] == f ? test : train).push_back(static_cast<int>(i));

    // Selection sees training labels only.
    std::vector<int> visible(n, INT_MIN);
    std::set<int> reads;
    for (int i : train) {
      visible[i] = labels[i];
      reads.insert(i);
    }
    if (audit) {
      audit->selection_reads[f].assign(reads.begin(), reads.end());
      audit->test_items[f] = test;
    }
    std::vector<int> inner = stratified_folds(visible, train, plan.inner_folds, plan.seed + 1 + f);

    const std::size_t cells = candidates.size() * plan.c_grid.size();
    std::vector<double> inner_err(cells, 0.0);
    parallel_for(cells, plan.workers, [&](std::size_t cell) {
      const auto& cand = candidates[cell / plan.c_grid.size()];
      const double c = plan.c_grid[cell % plan.c_grid.size()];
      double e = 0.0;
      for (int g = 0; g < plan.inner_folds; ++g) {
        std::vector<int> itr, itr_l, ite, ite_l;
        for (std::size_t p = 0; p < train.size(); ++p) {
          if (inner[p] == g) { ite.push_back(train[p]); ite_l.push_back(visible[train[p]]); }
          else { itr.push_back(train[p]); itr_l.push_back(visible[train[p]]); }
        }
        e += error_rate(*cand.gram, itr, itr_l, ite, ite_l, c, inner_opts);
      }
      inner_err[cell] = e / plan.inner_folds;
    });
    std::size_t best = 0;
    for (std::size_t cell = 1; cell < cells; ++cell)
      if (inner_err[cell] < inner_err[best]) best = cell;

    FoldResult fr;
    fr.candidate = best / plan.c_grid.size();
    fr.c = plan.c_grid[best % plan.c_grid.size()];
    fr.inner_error = inner_err[best];
    std::vector<int> train_l, test_l;
    for (int i : train) train_l.push_back(visible[i]);
    for (int i : test) test_l.push_back(labels[i]);
    fr.test_error = error_rate(*candidates[fr.candidate].gram, train, train_l, test, test_l, fr.c, inner_opts);
    res.folds.push_back(fr);
  }
  double s = 0.0;
  for (const auto& fr : res.folds) s += fr.test_error;
  res.mean_error = s / res.folds.size();
  double v = 0.0;
  for (const auto& fr : res.folds) v += (fr.test_error - res.mean_error) * (fr.test_error - res.mean_error);
  res.std_error = res.folds.size() > 1 ? std::sqrt(v / (res.folds.size() - 1)) : 0.0;
  return res;
}

}  // namespace twk
