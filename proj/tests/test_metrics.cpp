#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "imfed/metrics.hpp"

using namespace imfed;

namespace {

double pair_auc(const Matrix& scores, const std::vector<std::size_t>& truth, std::size_t c) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != c) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j] == c) continue;
      pairs += 1.0;
      if (scores(i, c) > scores(j, c)) wins += 1.0;
      else if (scores(i, c) == scores(j, c)) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Exact rational mean of per-class pair counts; compared with == below.
double pair_macro_auc(const Matrix& scores, const std::vector<std::size_t>& truth) {
  double acc = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    if (std::count(truth.begin(), truth.end(), c) == 0) continue;
    acc += pair_auc(scores, truth, c);
    ++present;
  }
  return acc / static_cast<double>(present);
}

}  // namespace

TEST(Confusion, Basics) {
  const std::vector<std::size_t> truth{0, 1, 2, 2, 1};
  const auto perfect = confusion_matrix(truth, truth, 3);
  EXPECT_EQ(perfect, (ConfusionMatrix{{1, 0, 0}, {0, 2, 0}, {0, 0, 2}}));
  const std::vector<std::size_t> zeros(5, 0);
  const auto col = confusion_matrix(zeros, truth, 3);
  EXPECT_EQ(col, (ConfusionMatrix{{1, 0, 0}, {2, 0, 0}, {2, 0, 0}}));
  EXPECT_THROW(confusion_matrix(std::vector<std::size_t>{0}, truth, 3), Error);
  EXPECT_THROW(confusion_matrix(std::vector<std::size_t>{3}, std::vector<std::size_t>{0}, 3), Error);
}

TEST(Auc, PerfectAndConstant) {
  const std::vector<std::size_t> truth{0, 1, 2, 0, 1, 2};
  Matrix perfect(6, 3, 0.0);
  for (std::size_t i = 0; i < 6; ++i) perfect(i, truth[i]) = 1.0;
  EXPECT_EQ(macro_auc(perfect, truth), 1.0);
  const Matrix flat(6, 3, 1.0 / 3.0);
  EXPECT_EQ(macro_auc(flat, truth), 0.5);
}

TEST(Auc, SingleClassUndefined) {
  try {
    macro_auc(Matrix(3, 2, 0.5), std::vector<std::size_t>{1, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
  }
}

TEST(Auc, AbsentClassExcluded) {
  const std::vector<std::size_t> truth{0, 1, 0, 1};
  Matrix s(4, 3, 0.0);
  s(0, 0) = 0.9;
  s(1, 1) = 0.8;
  const auto r = macro_auc_detailed(s, truth);
  EXPECT_EQ(r.excluded, (std::vector<std::size_t>{2}));
  EXPECT_EQ(r.value, pair_macro_auc(s, truth));
}

TEST(Auc, MatchesPairCountingOracle) {
  RngStream rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    const std::size_t k = 2 + rng.below(4);
    Matrix s(n, k);
    std::vector<std::size_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid so ties are common
      const auto p = rng.dirichlet(k, 1.0);
      for (std::size_t c = 0; c < k; ++c) s(i, c) = std::round(p[c] * 10.0) / 10.0;
      truth[i] = rng.below(k);
    }
    truth[0] = 0;
    truth[1] = 1;
    EXPECT_EQ(macro_auc(s, truth), pair_macro_auc(s, truth)) << "trial " << trial;
  }
}

TEST(Auc, MonotoneTransformInvariant) {
  RngStream rng(2);
  const std::size_t n = 60, k = 3;
  Matrix s(n, k), t(n, k);
  std::vector<std::size_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = rng.dirichlet(k, 1.0);
    for (std::size_t c = 0; c < k; ++c) {
      s(i, c) = p[c];
      t(i, c) = std::exp(3.0 * p[c]) + static_cast<double>(c);
    }
    truth[i] = i % k;
  }
  EXPECT_EQ(macro_auc(s, truth), macro_auc(t, truth));
}

TEST(MacroRates, HandCases) {
  const auto perfect = macro_rates({{5, 0}, {0, 5}});
  EXPECT_EQ(perfect.sensitivity, 1.0);
  EXPECT_EQ(perfect.specificity, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);

  // balanced K=2, everything predicted class 0
  const auto r = macro_rates({{5, 0}, {5, 0}});
  EXPECT_DOUBLE_EQ(r.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(r.specificity, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 1.0 / 3.0);
  EXPECT_TRUE(r.flagged.empty());

  // 3-class hand-worked case
  // truth 0: 4 right, 1 as class 1; truth 1: 2 right, 2 as class 2; truth 2: 3 right
  const auto h = macro_rates({{4, 1, 0}, {0, 2, 2}, {0, 0, 3}});
  const double sens = (4.0 / 5 + 2.0 / 4 + 3.0 / 3) / 3;
  const double spec = (7.0 / 7 + 7.0 / 8 + 7.0 / 9) / 3;
  const double f1 = (8.0 / 9 + 4.0 / 7 + 6.0 / 8) / 3;
  EXPECT_NEAR(h.sensitivity, sens, 1e-15);
  EXPECT_NEAR(h.specificity, spec, 1e-15);
  EXPECT_NEAR(h.f1, f1, 1e-15);
}

TEST(MacroRates, ZeroDenominatorsFlagged) {
  const auto r = macro_rates({{3, 0, 0}, {1, 2, 0}, {0, 0, 0}});
  EXPECT_EQ(r.flagged, (std::vector<std::size_t>{2}));
}

TEST(MacroRates, LabelPermutationSymmetry) {
  RngStream rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    ConfusionMatrix cm(3, std::vector<std::size_t>(3));
    for (auto& row : cm)
      for (auto& v : row) v = rng.below(10);
    const std::size_t perm[] = {2, 0, 1};
    ConfusionMatrix pm(3, std::vector<std::size_t>(3));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) pm[perm[i]][perm[j]] = cm[i][j];
    const auto a = macro_rates(cm);
    const auto b = macro_rates(pm);
    EXPECT_NEAR(a.sensitivity, b.sensitivity, 1e-15);
    EXPECT_NEAR(a.specificity, b.specificity, 1e-15);
    EXPECT_NEAR(a.f1, b.f1, 1e-15);
  }
}

TEST(MetricReport, AccuracyIsTraceOverN) {
  RngStream rng(4);
  const std::size_t n = 90;
  Matrix s(n, 3);
  std::vector<std::size_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = rng.dirichlet(3, 1.0);
    for (std::size_t c = 0; c < 3; ++c) s(i, c) = p[c];
    truth[i] = i % 3;
  }
  const auto r = metric_report(s, truth);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += argmax(s.row(i)) == truth[i];
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / n);
  EXPECT_DOUBLE_EQ(r.accuracy + static_cast<double>(n - correct) / n, 1.0);
  EXPECT_EQ(r.support, (std::vector<std::size_t>{30, 30, 30}));
  for (double v : {r.auc, r.accuracy, r.sensitivity, r.specificity, r.f1}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(PriorError, Examples) {
  PriorSet est;
  est.pi = {0.5, 0.5};
  EXPECT_NEAR(prior_error(est, std::vector<double>{1.0, 0.0}), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(prior_error(est, std::vector<double>{0.5, 0.5}), 0.0);
  EXPECT_THROW(prior_error(est, std::vector<double>{1.0}), Error);
}
