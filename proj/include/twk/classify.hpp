#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "twk/covkernels.hpp"

namespace twk {

struct SvmOptions {
  double tolerance = 1e-6;
  long max_iterations = 100000;
  /// Reject training Grams whose smallest eigenvalue is below -psd_tolerance * trace.
  double psd_tolerance = 1e-8;
  bool check_psd = true;
};

/// Binary 2-norm SVM, trained as a hard-margin SVM on K + I/(2C).
struct SvmModel {
  std::vector<int> support;   // dataset indices with nonzero multiplier
  std::vector<double> coef;   // alpha_i * y_i for each support index
  double bias = 0.0;
  double c = 1.0;
  int positive = 0;           // class id mapped to +1
  int negative = 1;
  double objective = 0.0;     // dual objective at the solution
  long iterations = 0;
  bool converged = false;

  /// f(x) = sum_i coef_i k(x_i, x) + bias, with `krow` indexed like the dataset.
  double decision(std::span<const double> krow) const;
};

/// `gram` is the full dataset Gram; `train` selects the training items and
/// `y` gives their +1/-1 targets (same order as `train`).
SvmModel svm_train(const Matrix& gram, std::span<const int> train, std::span<const int> y, double c,
                   const SvmOptions& opts = {});

/// Dual objective sum(alpha) - 1/2 alpha' Q alpha with Q_ij = y_i y_j (K_ij + [i==j]/(2C)).
double svm_dual_objective(const Matrix& k, std::span<const int> y, std::span<const double> alpha, double c);

/// Multipliers of the dual solution for a standalone problem (k indexed 0..n-1).
std::vector<double> svm_solve_dual(const Matrix& k, std::span<const int> y, double c, const SvmOptions& opts = {},
                                   long* iterations = nullptr, bool* converged = nullptr);

bool is_psd(const Matrix& k, double tolerance = 1e-8);

struct OvoModel {
  std::vector<int> classes;        // sorted
  std::vector<SvmModel> models;    // one per pair (a < b), a is the positive class
};

struct OvoDecision {
  int label = 0;
  std::vector<int> votes;          // per class, aligned with OvoModel::classes
  std::vector<double> margins;     // summed oriented decision values per class
  int decisions = 0;
};

OvoModel ovo_train(const Matrix& gram, std::span<const int> train, std::span<const int> labels, double c,
                   const SvmOptions& opts = {});

/// Majority vote; ties go to the larger summed margin, then the lower class id.
OvoDecision ovo_predict(const OvoModel& model, std::span<const double> krow);

/// exp(-|u - v|^2 / (2 sigma^2)).
Matrix rbf_baseline_gram(std::span<const std::vector<double>> vectors, double sigma);

struct KernelCandidate {
  std::string label;
  std::map<std::string, double> params;
  std::shared_ptr<const Matrix> gram;
};

struct CvPlan {
  int outer_folds = 5;
  int inner_folds = 5;
  std::vector<double> c_grid{0.1, 1, 10, 100};
  std::uint64_t seed = 1;
  int workers = 1;  // inner-CV cells run concurrently; results do not depend on it
};

/// Stratified assignment of items to folds: fold id per item.
std::vector<int> stratified_folds(std::span<const int> labels, std::span<const int> items, int folds,
                                  std::uint64_t seed);

/// Records which labels the selection stage of each outer fold looked at.
struct LabelAudit {
  std::vector<std::vector<int>> selection_reads;  // per outer fold, sorted unique
  std::vector<std::vector<int>> test_items;       // per outer fold

  /// True when no selection stage read a label from its own test fold.
  bool clean() const;
};

struct FoldResult {
  double test_error = 0.0;
  std::size_t candidate = 0;
  double c = 0.0;
  double inner_error = 0.0;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_error = 0.0;
  double std_error = 0.0;  // sample standard deviation over outer folds
};

/// Outer folds give test errors; within each training fold, inner CV picks a
/// (candidate, C) pair using training labels only.
CvResult nested_cv(std::span<const KernelCandidate> candidates, std::span<const int> labels, const CvPlan& plan,
                   LabelAudit* audit = nullptr, const SvmOptions& opts = {});

}  // namespace twk
