#pragma once

#include <vector>

#include "imfed/bank.hpp"
#include "imfed/classifier.hpp"
#include "imfed/numerics.hpp"

namespace imfed {

/// Priors held fixed while a client trains on its banked samples.
struct TransitionContext {
  PriorSet priors;
  bool frozen = true;

  std::size_t num_classes() const noexcept { return priors.pi.size(); }

  void validate() const {
    const auto k = priors.pi.size();
    require(k >= 1 && priors.pi_bar.size() == k && priors.Pi.rows() == k && priors.Pi.cols() == k,
            ErrorKind::invalid_prior, "prior set shapes disagree");
    for (double v : priors.pi)
      require(v > 0.0, ErrorKind::invalid_prior, "class prior must be positive");
  }

  /// Pi = I and pi_bar = pi: sub-banks coincide with classes.
  static TransitionContext identity(const Vector& pi) {
    TransitionContext ctx;
    ctx.priors.Pi = Matrix::identity(pi.size());
    ctx.priors.pi_bar = pi;
    ctx.priors.pi = pi;
    ctx.priors.pi_raw = pi;
    ctx.validate();
    return ctx;
  }
};

/// Mixing weights A[m][k] = pi_bar[m] * Pi[m][k] / pi[k], so that the
/// unnormalized sub-bank scores are u = A f.
inline Matrix transition_weights(const TransitionContext& ctx) {
  ctx.validate();
  const auto& ps = ctx.priors;
  const auto k = ps.pi.size();
  Matrix a(k, k);
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t j = 0; j < k; ++j) a(m, j) = ps.pi_bar[m] * ps.Pi(m, j) / ps.pi[j];
  return a;
}

inline Vector mixture_scores(const Matrix& weights, std::span<const double> f) {
  Vector u(weights.rows(), 0.0);
  for (std::size_t m = 0; m < weights.rows(); ++m)
    for (std::size_t k = 0; k < weights.cols(); ++k) u[m] += weights(m, k) * f[k];
  return u;
}

/// Normalizer of the Bayes-rule map; equals sum(f) when pi = pi_bar^T Pi.
inline double transition_denominator(std::span<const double> f, const TransitionContext& ctx) {
  require(f.size() == ctx.num_classes(), ErrorKind::invalid_input, "f length != K");
  const auto u = mixture_scores(transition_weights(ctx), f);
  double s = 0.0;
  for (double v : u) s += v;
  return s;
}

/// Class posterior f -> sub-bank posterior g.
inline ProbVector transition(std::span<const double> f, const TransitionContext& ctx) {
  require(f.size() == ctx.num_classes(), ErrorKind::invalid_input, "f length != K");
  Vector g = mixture_scores(transition_weights(ctx), f);
  double s = 0.0;
  for (double v : g) s += v;
  require(s > 0.0, ErrorKind::invalid_prior, "transition normalizer is not positive");
  for (double& v : g) v /= s;
  return g;
}

/// d loss / d logits for one sample, where loss = -log max(g_y, eps) and g is
/// the transition of softmax(logits). Chain: z -> f -> u = A f -> g = u/sum(u).
inline Vector sub_bank_logit_grad(std::span<const double> logits, std::size_t proxy_label,
                                  const Matrix& weights, double* loss = nullptr) {
  const auto k = logits.size();
  const ProbVector f = softmax(logits);
  const Vector u = mixture_scores(weights, f);
  double s = 0.0;
  for (double v : u) s += v;
  const double g_y = u[proxy_label] / s;
  if (loss) *loss = -std::log(std::max(g_y, kLogClamp));
  Vector dz(k, 0.0);
  if (g_y < kLogClamp) return dz;

  // dL/du_m = 1/S - [m == y] / u_y ; dL/df_k = sum_m A[m][k] dL/du_m
  Vector df(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double col = 0.0;
    for (std::size_t m = 0; m < weights.rows(); ++m) col += weights(m, j);
    df[j] = col / s - weights(proxy_label, j) / u[proxy_label];
  }
  double fdf = 0.0;
  for (std::size_t j = 0; j < k; ++j) fdf += f[j] * df[j];
  for (std::size_t j = 0; j < k; ++j) dz[j] = f[j] * (df[j] - fdf);
  return dz;
}

inline void check_proxy_batch(const ModelParams& params, const Matrix& features,
                              std::span<const std::size_t> proxy_labels,
                              const TransitionContext& ctx) {
  check_batch(params, features, proxy_labels);
  require(ctx.num_classes() == params.config.num_classes, ErrorKind::invalid_input,
          "transition context has " + std::to_string(ctx.num_classes()) + " classes, model has " +
              std::to_string(params.config.num_classes));
}

/// Mean cross-entropy of the transitioned predictions against sub-bank
/// indices.
inline double sub_bank_loss(const ModelParams& params, const Matrix& features,
                            std::span<const std::size_t> proxy_labels,
                            const TransitionContext& ctx) {
  check_proxy_batch(params, features, proxy_labels, ctx);
  double acc = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i)
    acc += cross_entropy(transition(forward(params, features.row(i)), ctx), proxy_labels[i]);
  return acc / static_cast<double>(features.rows());
}

/// Exact gradient of `sub_bank_loss` w.r.t. the flat parameters (no l2 term).
inline Vector sub_bank_loss_grad(const ModelParams& params, const Matrix& features,
                                 std::span<const std::size_t> proxy_labels,
                                 const TransitionContext& ctx, double* mean_loss = nullptr) {
  check_proxy_batch(params, features, proxy_labels, ctx);
  const Matrix weights = transition_weights(ctx);
  Vector grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(features.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto x = features.row(i);
    const auto trace = forward_trace(params, x);
    double loss = 0.0;
    const Vector dz = sub_bank_logit_grad(trace.logits, proxy_labels[i], weights, &loss);
    total += loss;
    backprop_logits(params, x, trace, dz, scale, grad);
  }
  if (mean_loss) *mean_loss = total * scale;
  return grad;
}

}  // namespace imfed
