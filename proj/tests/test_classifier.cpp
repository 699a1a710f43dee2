#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "imfed/classifier.hpp"

using namespace imfed;

namespace {

ModelParams random_params(const ModelConfig& cfg, RngStream& rng, double scale = 1.0) {
  ModelParams p = ModelParams::zeros(cfg);
  for (auto& v : p.flat) v = rng.uniform(-scale, scale);
  return p;
}

Matrix random_features(std::size_t n, std::size_t d, RngStream& rng) {
  Matrix x(n, d);
  for (auto& v : x.data()) v = rng.normal();
  return x;
}

double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST(Classifier, ShapesAndSizes) {
  EXPECT_EQ(ModelParams::zeros({4, 3, 0, 0.0}).size(), 4u * 3 + 3);
  EXPECT_EQ(ModelParams::zeros({4, 3, 5, 0.0}).size(), 5u * 4 + 5 + 3 * 5 + 3);
  EXPECT_THROW(ModelParams::zeros({0, 3, 0, 0.0}), Error);
  EXPECT_THROW(ModelParams::zeros({3, 1, 0, 0.0}), Error);
}

TEST(Classifier, InitializationRange) {
  RngStream rng(1);
  const ModelParams p = ModelParams::initialize({6, 3, 4, 1e-4}, rng);
  std::size_t offset = 0;
  for (const auto& s : p.shapes) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v = p.flat[offset + i];
      if (s.is_weight) {
        EXPECT_LT(std::abs(v), 0.01);
      } else {
        EXPECT_EQ(v, 0.0);
      }
    }
    offset += s.size();
  }
}

TEST(Forward, ZeroModelIsUniform) {
  const ModelParams p = ModelParams::zeros({3, 4, 0, 0.0});
  for (double v : forward(p, std::vector<double>{1.0, -2.0, 3.5})) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, TwoClassSigmoid) {
  RngStream rng(2);
  ModelParams p = ModelParams::zeros({3, 2, 0, 0.0});
  for (std::size_t i = 0; i < 6; ++i) p.flat[i] = rng.uniform(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(3);
    for (auto& v : x) v = rng.normal();
    double dw = 0.0;
    for (std::size_t j = 0; j < 3; ++j) dw += (p.flat[3 + j] - p.flat[j]) * x[j];
    EXPECT_NEAR(forward(p, x)[1], 1.0 / (1.0 + std::exp(-dw)), 1e-14);
  }
}

TEST(Forward, BatchMatchesSingles) {
  RngStream rng(3);
  for (std::size_t h : {0u, 5u}) {
    const ModelParams p = random_params({4, 3, h, 0.0}, rng);
    const Matrix x = random_features(9, 4, rng);
    const Matrix out = forward_batch(p, x);
    for (std::size_t i = 0; i < 9; ++i) {
      const auto single = forward(p, x.row(i));
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(out(i, k), single[k]);
      EXPECT_TRUE(is_prob_vector(single));
    }
  }
}

TEST(Forward, DimensionMismatch) {
  const ModelParams p = ModelParams::zeros({3, 2, 0, 0.0});
  try {
    forward(p, std::vector<double>{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(SupervisedGrad, MatchesFiniteDifferences) {
  RngStream rng(4);
  int draws = 0;
  for (std::size_t h : {0u, 4u}) {
    for (int trial = 0; trial < 60; ++trial, ++draws) {
      const ModelConfig cfg{3, 3, h, 0.01};
      const ModelParams p = random_params(cfg, rng, 0.8);
      const Matrix x = random_features(5, 3, rng);
      std::vector<std::size_t> y(5);
      for (auto& v : y) v = rng.below(3);
      const Vector analytic = supervised_grad(p, x, y);
      const Vector numeric = finite_diff_grad(
          [&](std::span<const double> flat) {
            ModelParams q = p;
            q.flat.assign(flat.begin(), flat.end());
            return supervised_loss(q, x, y);
          },
          p.flat);
      ASSERT_LE(max_rel_error(analytic, numeric), 1e-5) << "draw " << draws;
    }
  }
  EXPECT_GE(draws, 100);
}

TEST(SupervisedGrad, DuplicationInvariant) {
  RngStream rng(5);
  const ModelParams p = random_params({3, 3, 2, 1e-3}, rng);
  const Matrix x = random_features(4, 3, rng);
  const std::vector<std::size_t> y{0, 1, 2, 1};
  Matrix xx(8, 3);
  std::vector<std::size_t> yy;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 3; ++j) xx(i, j) = x(i % 4, j);
    yy.push_back(y[i % 4]);
  }
  const auto a = supervised_grad(p, x, y);
  const auto b = supervised_grad(p, xx, yy);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(SupervisedGrad, ConvergedSeparableFitIsNearStationary) {
  RngStream rng(6);
  Matrix x(20, 2);
  std::vector<std::size_t> y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    y[i] = i % 2;
    x(i, 0) = (y[i] ? 4.0 : -4.0) + 0.3 * rng.normal();
    x(i, 1) = rng.normal();
  }
  const double lambda = 0.01;
  ModelParams p = ModelParams::zeros({2, 2, 0, lambda});
  auto opt = OptimizerState::make(OptimizerKind::sgd, 0.5, p.size());
  for (int i = 0; i < 20000; ++i) std::tie(p, opt) = apply_update(p, supervised_grad(p, x, y), opt);
  double norm = 0.0;
  for (double g : supervised_grad(p, x, y)) norm += g * g;
  double penalty = 0.0;
  for (std::size_t i = 0; i < 4; ++i) penalty += 2.0 * lambda * std::abs(p.flat[i]);
  EXPECT_LT(std::sqrt(norm), 1e-6 * penalty);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(argmax(forward(p, x.row(i))), y[i]);
}

TEST(SupervisedGrad, BadLabels) {
  const ModelParams p = ModelParams::zeros({2, 2, 0, 0.0});
  const Matrix x(1, 2);
  EXPECT_THROW(supervised_grad(p, x, std::vector<std::size_t>{2}), Error);
  EXPECT_THROW(supervised_grad(p, Matrix(0, 2), std::vector<std::size_t>{}), Error);
}

TEST(Optimizer, SgdStep) {
  ModelParams p = ModelParams::zeros({2, 2, 0, 0.0});
  std::fill(p.flat.begin(), p.flat.end(), 1.0);
  const auto before = p;
  const Vector g(p.size(), 1.0);
  auto [q, opt] = apply_update(p, g, OptimizerState::make(OptimizerKind::sgd, 0.1, p.size()));
  for (double v : q.flat) EXPECT_DOUBLE_EQ(v, 0.9);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.step_count, 1u);
}

TEST(Optimizer, AdamFirstStepIsSignTimesLr) {
  RngStream rng(8);
  ModelParams p = ModelParams::zeros({3, 2, 0, 0.0});
  Vector g(p.size());
  for (auto& v : g) v = rng.uniform(-5, 5);
  auto [q, opt] = apply_update(p, g, OptimizerState::make(OptimizerKind::adam, 0.01, p.size()));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(q.flat[i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-9);
  EXPECT_EQ(opt.step_count, 1u);
}

TEST(Optimizer, ZeroGradientsChangeNothing) {
  RngStream rng(9);
  const ModelParams p = random_params({3, 2, 0, 0.0}, rng);
  const Vector zero(p.size(), 0.0);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    ModelParams q = p;
    auto opt = OptimizerState::make(kind, 0.1, p.size());
    for (int i = 0; i < 10; ++i) std::tie(q, opt) = apply_update(q, zero, opt);
    EXPECT_EQ(q.flat, p.flat);
  }
}

TEST(Optimizer, LengthMismatch) {
  const ModelParams p = ModelParams::zeros({2, 2, 0, 0.0});
  EXPECT_THROW(apply_update(p, Vector(3, 0.0), OptimizerState{}), Error);
}

TEST(WeightedAverage, Examples) {
  ModelParams a = ModelParams::zeros({2, 2, 0, 0.0});
  ModelParams b = a;
  std::fill(b.flat.begin(), b.flat.end(), 4.0);
  const std::vector<ModelParams> models{a, b};
  const auto avg = weighted_average(models, std::vector<double>{0.25, 0.75});
  for (double v : avg.flat) EXPECT_DOUBLE_EQ(v, 3.0);

  const std::vector<std::size_t> sizes{1, 3};
  const auto w = fedavg_weights(sizes);
  EXPECT_EQ(weighted_average(models, w).flat, avg.flat);

  const std::vector<ModelParams> one{b};
  EXPECT_EQ(weighted_average(one, std::vector<double>{1.0}).flat, b.flat);
}

TEST(WeightedAverage, PermutationAndOneHot) {
  RngStream rng(10);
  const ModelConfig cfg{3, 3, 2, 0.0};
  std::vector<ModelParams> models;
  for (int i = 0; i < 4; ++i) models.push_back(random_params(cfg, rng));
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  const auto base = weighted_average(models, w);
  const std::vector<ModelParams> rev(models.rbegin(), models.rend());
  const std::vector<double> wrev(w.rbegin(), w.rend());
  const auto perm = weighted_average(rev, wrev);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base.flat[i], perm.flat[i], 1e-15);
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<double> hot(4, 0.0);
    hot[m] = 1.0;
    EXPECT_EQ(weighted_average(models, hot).flat, models[m].flat);
  }
}

TEST(WeightedAverage, Rejections) {
  const ModelParams a = ModelParams::zeros({2, 2, 0, 0.0});
  const ModelParams b = ModelParams::zeros({3, 2, 0, 0.0});
  const std::vector<ModelParams> mixed{a, b};
  EXPECT_THROW(weighted_average(mixed, std::vector<double>{0.5, 0.5}), Error);
  const std::vector<ModelParams> same{a, a};
  EXPECT_THROW(weighted_average(same, std::vector<double>{0.5, 0.6}), Error);
  EXPECT_THROW(weighted_average(same, std::vector<double>{1.5, -0.5}), Error);
  EXPECT_THROW(weighted_average(std::vector<ModelParams>{}, std::vector<double>{}), Error);
}
