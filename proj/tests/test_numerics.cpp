#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "imfed/numerics.hpp"

using namespace imfed;

TEST(Softmax, ZerosGiveUniform) {
  const auto p = softmax(std::vector<double>{0, 0, 0});
  for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const auto p = softmax(std::vector<double>{1000, 0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_TRUE(is_prob_vector(p));
}

TEST(Softmax, LogRatios) {
  const auto p = softmax(std::vector<double>{std::log(2.0), std::log(1.0)});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  try {
    softmax(std::vector<double>{0.0, std::nan("")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  EXPECT_THROW(softmax(std::vector<double>{INFINITY}), Error);
  EXPECT_THROW(softmax(std::vector<double>{}), Error);
}

TEST(Softmax, ShiftInvarianceAndValidity) {
  RngStream rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng.below(8);
    std::vector<double> z(k), shifted(k);
    const double c = rng.uniform(-500, 500);
    for (std::size_t i = 0; i < k; ++i) {
      z[i] = rng.uniform(-400, 400);
      shifted[i] = z[i] + c;
    }
    const auto p = softmax(z);
    const auto q = softmax(shifted);
    ASSERT_TRUE(is_prob_vector(p));
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(cross_entropy(std::vector<double>{1, 0}, 0), 0.0);
  EXPECT_NEAR(cross_entropy(std::vector<double>{0.5, 0.5}, 1), std::log(2.0), 1e-15);
  const double clamped = cross_entropy(std::vector<double>{0, 1}, 0);
  EXPECT_NEAR(clamped, 27.631021115928547, 1e-9);
  EXPECT_TRUE(std::isfinite(clamped));
}

TEST(CrossEntropy, LabelOutOfRange) {
  try {
    cross_entropy(std::vector<double>{0.5, 0.5}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(CrossEntropy, NonNegative) {
  RngStream rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = rng.dirichlet(4, 0.5);
    EXPECT_GE(cross_entropy(p, rng.below(4)), 0.0);
  }
}

TEST(FiniteDiff, Square) {
  const auto g = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; },
                                  std::vector<double>{3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, LinearFunctionsExact) {
  RngStream rng(11);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> coef(6), x(6);
    for (auto& c : coef) c = rng.uniform(-3, 3);
    for (auto& v : x) v = rng.uniform(-10, 10);
    auto f = [&](std::span<const double> y) {
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += coef[i] * y[i];
      return s;
    };
    const auto g = finite_diff_grad(f, x, h);
    // 10 h^2 is below double rounding at these magnitudes; allow that floor.
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], coef[i], 10 * h * h + 1e-9);
  }
  const auto ones = finite_diff_grad(
      [](std::span<const double> y) { return std::accumulate(y.begin(), y.end(), 0.0); },
      std::vector<double>{1.5, -2.0, 7.0});
  for (double v : ones) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, SoftmaxCrossEntropyClosedForm) {
  RngStream rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-3, 3);
    const std::size_t k = rng.below(4);
    const auto g = finite_diff_grad(
        [k](std::span<const double> y) { return cross_entropy(softmax(y), k); }, z);
    const auto p = softmax(z);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], p[i] - (i == k ? 1.0 : 0.0), 1e-6);
  }
}

TEST(FiniteDiff, NonFiniteIsOracleFailure) {
  try {
    finite_diff_grad([](std::span<const double> x) { return std::log(x[0]); },
                     std::vector<double>{0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_failure);
  }
}

TEST(Frobenius, Examples) {
  const Matrix a = Matrix::from_rows({{1, 0}, {0, 1}});
  EXPECT_EQ(frobenius_distance(a, a), 0.0);
  EXPECT_NEAR(frobenius_distance(a, Matrix(2, 2)), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(frobenius_distance(a, Matrix(2, 3)), Error);
}

TEST(Frobenius, MatchesScalarLoop) {
  RngStream rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(3, 3), b(3, 3);
    for (auto& v : a.data()) v = rng.normal();
    for (auto& v : b.data()) v = rng.normal();
    double acc = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) acc += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    EXPECT_DOUBLE_EQ(frobenius_distance(a, b), std::sqrt(acc));
  }
}

TEST(Matrix, ShapeChecks) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), Error);
  const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> pick{2, 0};
  const Matrix s = m.select_rows(pick);
  EXPECT_EQ(s, Matrix::from_rows({{5, 6}, {1, 2}}));
}

TEST(Rng, ReplayAndStreams) {
  RngStream a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    differs |= x != c();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, ChildIgnoresParentPosition) {
  RngStream a(5);
  const RngStream fresh_child = a.child(3);
  for (int i = 0; i < 17; ++i) a();
  RngStream later_child = a.child(3);
  RngStream copy = fresh_child;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(copy(), later_child());
}

TEST(Rng, ChildrenDistinct) {
  std::set<std::uint64_t> firsts;
  RngStream root(1);
  for (std::uint64_t t = 0; t < 200; ++t) firsts.insert(root.child(t)());
  EXPECT_EQ(firsts.size(), 200u);
}

TEST(Rng, MomentsRoughlyRight) {
  RngStream rng(123);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sg += rng.gamma(1.5);
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
  EXPECT_NEAR(sg / n, 1.5, 0.02);
  double small = 0;
  for (int i = 0; i < n; ++i) small += rng.gamma(0.3);
  EXPECT_NEAR(small / n, 0.3, 0.01);
}

TEST(Rng, BelowAndDirichlet) {
  RngStream rng(8);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) ++hist[rng.below(5)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(is_prob_vector(rng.dirichlet(6, 1.5)));
  EXPECT_THROW(rng.below(0), Error);
  EXPECT_THROW(rng.gamma(0.0), Error);
}
