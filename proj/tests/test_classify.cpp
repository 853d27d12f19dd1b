#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>

#include "oracles.hpp"
#include "twk/classify.hpp"
#include "twk/error.hpp"

using namespace twk;

namespace {

struct Problem {
  Matrix k;
  std::vector<int> y;
  std::vector<std::vector<double>> x;
};

// Two Gaussian clouds in 3-D under an RBF kernel.
Problem clouds(std::mt19937_64& rng, int n, double separation, double sigma = 1.0) {
  std::normal_distribution<double> z;
  Problem p;
  for (int i = 0; i < n; ++i) {
    p.y.push_back(i % 2 ? 1 : -1);
    p.x.push_back({z(rng) + separation * p.y.back(), z(rng), z(rng)});
  }
  p.k = rbf_baseline_gram(p.x, sigma);
  return p;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<double> row(const Matrix& k, int i) {
  return std::vector<double>(k.col(i).data(), k.col(i).data() + k.rows());
}

// Blocks of `per` items per class with within-class similarity `in`.
Matrix block_gram(int classes, int per, double in, double out) {
  const int n = classes * per;
  Matrix k = Matrix::Constant(n, n, out);
  for (int c = 0; c < classes; ++c) k.block(c * per, c * per, per, per).setConstant(in);
  k.diagonal().setOnes();
  return k;
}

}  // namespace

TEST_CASE("two-point problem") {
  Matrix k = Matrix::Identity(2, 2);
  std::vector<int> idx{0, 1}, y{1, -1};
  SvmModel m = svm_train(k, idx, y, 10.0);
  CHECK(m.support.size() == 2);
  CHECK(m.converged);
  CHECK(m.decision(row(k, 0)) > 0);
  CHECK(m.decision(row(k, 1)) < 0);
  // Symmetric: the decision values are opposite.
  CHECK(m.decision(row(k, 0)) == doctest::Approx(-m.decision(row(k, 1))));
}

TEST_CASE("dual objective matches the support-set QP reference") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    Problem p = clouds(rng, 10, 0.6);
    const double c = std::vector<double>{0.1, 1, 10, 100}[t % 4];
    long iters = 0;
    bool conv = false;
    auto alpha = svm_solve_dual(p.k, p.y, c, {}, &iters, &conv);
    CHECK(conv);
    const double ref = oracle::svm_dual_optimum(p.k, p.y, c);
    CHECK(std::abs(svm_dual_objective(p.k, p.y, alpha, c) - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("solution satisfies the optimality conditions") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    Problem p = clouds(rng, 30, 0.5);
    const double c = 3.0;
    SvmModel m = svm_train(p.k, iota_vec(30), p.y, c);
    REQUIRE(m.converged);
    // y_i f~(x_i) >= 1 with equality on support vectors, where f~ uses K + I/(2C).
    std::vector<double> alpha(30, 0.0);
    for (std::size_t s = 0; s < m.support.size(); ++s) alpha[m.support[s]] = m.coef[s] * p.y[m.support[s]];
    double balance = 0.0;
    for (int i = 0; i < 30; ++i) {
      CHECK(alpha[i] >= 0.0);
      balance += alpha[i] * p.y[i];
      const double margin = p.y[i] * (m.decision(row(p.k, i)) + alpha[i] * p.y[i] / (2 * c));
      if (alpha[i] > 0) CHECK(margin == doctest::Approx(1.0).epsilon(1e-4));
      else CHECK(margin >= 1.0 - 1e-4);
    }
    CHECK(std::abs(balance) < 1e-10);
  }
}

TEST_CASE("finite C equals a hard margin on the ridged kernel") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 8; ++t) {
    Problem p = clouds(rng, 16, 0.4);
    const double c = std::vector<double>{0.1, 1, 10, 100}[t % 4];
    SvmOptions opts;
    opts.tolerance = 1e-10;
    SvmModel a = svm_train(p.k, iota_vec(16), p.y, c, opts);
    Matrix ridged = p.k + Matrix::Identity(16, 16) / (2 * c);
    SvmModel b = svm_train(ridged, iota_vec(16), p.y, 1e15, opts);
    std::mt19937_64 r2(100 + t);
    std::normal_distribution<double> z;
    for (int q = 0; q < 10; ++q) {
      std::vector<double> x{z(r2), z(r2), z(r2)}, krow(16);
      for (int i = 0; i < 16; ++i) krow[i] = std::exp(-oracle::sqdist(x, p.x[i]) / 2);
      CHECK(std::abs(a.decision(krow) - b.decision(krow)) < 1e-8);
    }
  }
}

TEST_CASE("duplicating a point off the margin leaves the decision function unchanged") {
  std::mt19937_64 rng(4);
  int tested = 0;
  for (int t = 0; t < 10; ++t) {
    Problem p = clouds(rng, 20, 1.5);
    const double c = 1.0;
    SvmOptions opts;
    opts.tolerance = 1e-12;
    SvmModel m = svm_train(p.k, iota_vec(20), p.y, c, opts);
    int spare = -1;
    for (int i = 0; i < 20 && spare < 0; ++i)
      if (std::find(m.support.begin(), m.support.end(), i) == m.support.end()) spare = i;
    if (spare < 0) continue;
    ++tested;
    auto x2 = p.x;
    auto y2 = p.y;
    x2.push_back(p.x[spare]);
    y2.push_back(p.y[spare]);
    Matrix k2 = rbf_baseline_gram(x2, 1.0);
    SvmModel m2 = svm_train(k2, iota_vec(21), y2, c, opts);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> r1 = row(p.k, i), r2 = row(k2, i);
      CHECK(std::abs(m.decision(r1) - m2.decision(r2)) < 1e-8);
    }
  }
  CHECK(tested > 0);
}

TEST_CASE("training input errors") {
  Matrix k = Matrix::Identity(3, 3);
  std::vector<int> idx{0, 1, 2};
  CHECK_THROWS_AS(svm_train(k, idx, std::vector<int>{1, 1, 1}, 1.0), InputError);
  CHECK_THROWS_AS(svm_train(k, idx, std::vector<int>{1, -1, 1}, 0.0), InputError);
  Matrix bad(2, 2);
  bad << 1, 3, 3, 1;
  CHECK_THROWS_AS(svm_train(bad, std::vector<int>{0, 1}, std::vector<int>{1, -1}, 1.0), InputError);
  CHECK(is_psd(k));
  CHECK_FALSE(is_psd(bad));
}

TEST_CASE("one-vs-one voting") {
  auto constant = [](int pos, int neg, double f) {
    SvmModel m;
    m.positive = pos;
    m.negative = neg;
    m.bias = f;
    return m;
  };
  std::vector<double> krow(1, 0.0);
  OvoModel two{{0, 1}, {constant(0, 1, -0.3)}};
  auto d2 = ovo_predict(two, krow);
  CHECK(d2.decisions == 1);
  CHECK(d2.label == 1);

  OvoModel majority{{4, 5, 6}, {constant(4, 5, 1.0), constant(4, 6, 1.0), constant(5, 6, 1.0)}};
  auto dm = ovo_predict(majority, krow);
  CHECK(dm.votes == std::vector<int>{2, 1, 0});
  CHECK(dm.label == 4);
  CHECK(dm.decisions == 3);

  // One vote each; margins 0.5, -0.8, 0.3.
  OvoModel cycle{{0, 1, 2}, {constant(0, 1, 1.0), constant(0, 2, -0.5), constant(1, 2, 0.2)}};
  auto dc = ovo_predict(cycle, krow);
  CHECK(dc.votes == std::vector<int>{1, 1, 1});
  CHECK(dc.margins[0] == doctest::Approx(0.5));
  CHECK(dc.margins[1] == doctest::Approx(-0.8));
  CHECK(dc.label == 0);

  // One vote each and equal margins: lowest class id.
  OvoModel flat{{0, 1, 2}, {constant(0, 1, 1.0), constant(0, 2, -1.0), constant(1, 2, 1.0)}};
  CHECK(ovo_predict(flat, krow).label == 0);
}

TEST_CASE("one-vs-one training separates block classes") {
  Matrix k = block_gram(4, 5, 0.9, 0.1);
  std::vector<int> idx = iota_vec(20), labels;
  for (int i = 0; i < 20; ++i) labels.push_back(10 + i / 5);
  OvoModel m = ovo_train(k, idx, labels, 10.0);
  CHECK(m.classes == std::vector<int>{10, 11, 12, 13});
  CHECK(m.models.size() == 6);
  for (int i = 0; i < 20; ++i) {
    auto d = ovo_predict(m, row(k, i));
    CHECK(d.label == labels[i]);
    CHECK(d.decisions == 6);
  }
}

TEST_CASE("RBF baseline Gram") {
  std::vector<std::vector<double>> v{{0, 0}, {1, 1}, {3, -2}};
  Matrix k = rbf_baseline_gram(v, 1.0);
  CHECK(k(1, 1) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)));  // |u-v|^2 = 2 sigma^2
  CHECK(k(0, 1) == doctest::Approx(0.367879).epsilon(1e-6));
  Matrix wide = rbf_baseline_gram(v, 1e6);
  CHECK(wide.minCoeff() > 1 - 1e-10);
  CHECK_THROWS_AS(rbf_baseline_gram(v, 0.0), InputError);
  std::vector<std::vector<double>> ragged{{0}, {0, 1}};
  CHECK_THROWS_AS(rbf_baseline_gram(ragged, 1.0), InputError);
}

TEST_CASE("stratified folds") {
  std::vector<int> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(i % 4 == 0 ? 7 : i % 3);
  std::vector<int> items = iota_vec(53);
  auto f = stratified_folds(labels, items, 5, 9);
  CHECK(f == stratified_folds(labels, items, 5, 9));
  CHECK(f != stratified_folds(labels, items, 5, 10));
  std::map<int, std::vector<int>> per;  // class -> count per fold
  std::vector<int> sizes(5, 0);
  for (int i = 0; i < 53; ++i) {
    REQUIRE(f[i] >= 0);
    REQUIRE(f[i] < 5);
    ++sizes[f[i]];
    per[labels[i]].resize(5);
    ++per[labels[i]][f[i]];
  }
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  for (auto& [cls, counts] : per)
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
  CHECK_THROWS_AS(stratified_folds(labels, std::vector<int>{0, 1, 2}, 5, 1), InputError);
  CHECK_THROWS_AS(stratified_folds(labels, items, 1, 1), InputError);
}

TEST_CASE("nested cross-validation") {
  std::mt19937_64 rng(5);
  const int n = 60;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) labels.push_back(i % 3);
  // A sharp kernel that sees the classes and a blurred one that does not.
  auto good = std::make_shared<Matrix>(Matrix::Identity(n, n));
  auto blur = std::make_shared<Matrix>(Matrix::Constant(n, n, 0.5));
  blur->diagonal().setOnes();
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> x;
  for (int i = 0; i < n; ++i) x.push_back({3.0 * labels[i] + z(rng), z(rng)});
  *good = rbf_baseline_gram(x, 1.0);
  std::vector<KernelCandidate> cands{{"blur", {{"s", 0}}, blur}, {"good", {{"s", 1}}, good}};
  CvPlan plan;
  plan.seed = 3;
  LabelAudit audit;
  CvResult r = nested_cv(cands, labels, plan, &audit);
  REQUIRE(r.folds.size() == 5);
  for (const auto& f : r.folds) CHECK(f.candidate == 1);
  CHECK(r.mean_error < 0.2);
  CHECK(audit.clean());

  // Sample standard deviation over outer folds.
  double m = 0, v = 0;
  for (const auto& f : r.folds) m += f.test_error / 5;
  for (const auto& f : r.folds) v += (f.test_error - m) * (f.test_error - m) / 4;
  CHECK(r.mean_error == doctest::Approx(m));
  CHECK(r.std_error == doctest::Approx(std::sqrt(v)));

  // Reproducible bit for bit, whatever the worker count.
  CvPlan p4 = plan;
  p4.workers = 4;
  CvResult r2 = nested_cv(cands, labels, p4);
  for (int f = 0; f < 5; ++f) {
    CHECK(r2.folds[f].test_error == r.folds[f].test_error);
    CHECK(r2.folds[f].inner_error == r.folds[f].inner_error);
    CHECK(r2.folds[f].c == r.folds[f].c);
  }
}

TEST_CASE("selection ignores the labels of the test fold") {
  std::mt19937_64 rng(6);
  const int n = 50;
  std::vector<int> labels;
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> x;
  for (int i = 0; i < n; ++i) {
    labels.push_back(i % 2);
    x.push_back({1.2 * labels[i] + z(rng), z(rng)});
  }
  std::vector<KernelCandidate> cands;
  for (double s : {0.3, 1.0, 3.0})
    cands.push_back({"s", {{"sigma", s}}, std::make_shared<Matrix>(rbf_baseline_gram(x, s))});
  CvPlan plan;
  LabelAudit audit;
  CvResult base = nested_cv(cands, labels, plan, &audit);
  CHECK(audit.clean());
  std::vector<int> all = iota_vec(n);
  auto outer = stratified_folds(labels, all, plan.outer_folds, plan.seed);
  for (int f = 0; f < plan.outer_folds; ++f) {
    // Flip the labels of the test fold only (class sizes per fold stay equal).
    std::vector<int> flipped = labels;
    for (int i = 0; i < n; ++i)
      if (outer[i] == f) flipped[i] = 1 - flipped[i];
    if (stratified_folds(flipped, all, plan.outer_folds, plan.seed) != outer) continue;
    CvResult r = nested_cv(cands, flipped, plan);
    CHECK(r.folds[f].candidate == base.folds[f].candidate);
    CHECK(r.folds[f].c == base.folds[f].c);
    CHECK(r.folds[f].inner_error == base.folds[f].inner_error);
  }
}

TEST_CASE("constant labels give zero error") {
  std::vector<int> labels(25, 4);
  auto k = std::make_shared<Matrix>(Matrix::Identity(25, 25));
  std::vector<KernelCandidate> cands{{"id", {}, k}};
  CvResult r = nested_cv(cands, labels, CvPlan{});
  CHECK(r.mean_error == 0.0);
  CHECK(r.std_error == 0.0);
}

TEST_CASE("nested cross-validation input errors") {
  std::vector<int> labels(10, 0);
  CHECK_THROWS_AS(nested_cv(std::vector<KernelCandidate>{}, labels, CvPlan{}), InputError);
  std::vector<KernelCandidate> wrong{{"w", {}, std::make_shared<Matrix>(Matrix::Identity(3, 3))}};
  CHECK_THROWS_AS(nested_cv(wrong, labels, CvPlan{}), InputError);
  Matrix bad = Matrix::Identity(10, 10);
  bad(0, 1) = bad(1, 0) = 5;
  std::vector<KernelCandidate> npsd{{"b", {}, std::make_shared<Matrix>(bad)}};
  CHECK_THROWS_AS(nested_cv(npsd, labels, CvPlan{}), InputError);
}
