#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "imfed/numerics.hpp"

namespace imfed {

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  /// 0 selects the linear softmax model; H > 0 adds one tanh hidden layer.
  std::size_t hidden_dim = 0;
  double l2_penalty = 1e-4;

  void validate() const {
    require(input_dim >= 1, ErrorKind::invalid_input, "input_dim must be >= 1");
    require(num_classes >= 2, ErrorKind::invalid_input, "num_classes must be >= 2");
    require(l2_penalty >= 0.0, ErrorKind::invalid_input, "l2_penalty must be >= 0");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Weight matrices are penalized, biases are not.
  bool is_weight = true;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

inline std::vector<LayerShape> layer_shapes(const ModelConfig& config) {
  const auto d = config.input_dim;
  const auto k = config.num_classes;
  const auto h = config.hidden_dim;
  if (h == 0) return {{k, d, true}, {k, 1, false}};
  return {{h, d, true}, {h, 1, false}, {k, h, true}, {k, 1, false}};
}

/// Flat parameter vector; layers are stored back to back in `shapes` order.
struct ModelParams {
  ModelConfig config;
  std::vector<LayerShape> shapes;
  Vector flat;

  static ModelParams zeros(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.shapes = layer_shapes(config);
    std::size_t n = 0;
    for (const auto& s : p.shapes) n += s.size();
    p.flat.assign(n, 0.0);
    return p;
  }

  /// Weights uniform in (-0.01, 0.01), biases zero.
  static ModelParams initialize(const ModelConfig& config, RngStream& rng) {
    ModelParams p = zeros(config);
    std::size_t offset = 0;
    for (const auto& s : p.shapes) {
      if (s.is_weight)
        for (std::size_t i = 0; i < s.size(); ++i) p.flat[offset + i] = rng.uniform(-0.01, 0.01);
      offset += s.size();
    }
    return p;
  }

  std::size_t size() const noexcept { return flat.size(); }

  bool compatible_with(const ModelParams& other) const {
    return config == other.config && shapes == other.shapes && flat.size() == other.flat.size();
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace detail {

// y = W x + b over a row-major (rows x cols) block at `w`.
inline void affine(const double* w, const double* b, std::span<const double> x,
                   std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

}  // namespace detail

/// Logits plus the hidden activation (empty for the linear model), which the
/// backward pass needs.
struct ForwardTrace {
  Vector hidden;
  Vector logits;
};

inline ForwardTrace forward_trace(const ModelParams& params, std::span<const double> x) {
  const auto& cfg = params.config;
  require(x.size() == cfg.input_dim, ErrorKind::invalid_input,
          "feature length " + std::to_string(x.size()) + " != input_dim " +
              std::to_string(cfg.input_dim));
  const double* p = params.flat.data();
  ForwardTrace t;
  t.logits.resize(cfg.num_classes);
  if (cfg.hidden_dim == 0) {
    const double* w = p;
    const double* b = w + cfg.num_classes * cfg.input_dim;
    detail::affine(w, b, x, cfg.num_classes, cfg.input_dim, t.logits.data());
    return t;
  }
  const double* w1 = p;
  const double* b1 = w1 + cfg.hidden_dim * cfg.input_dim;
  const double* w2 = b1 + cfg.hidden_dim;
  const double* b2 = w2 + cfg.num_classes * cfg.hidden_dim;
  t.hidden.resize(cfg.hidden_dim);
  detail::affine(w1, b1, x, cfg.hidden_dim, cfg.input_dim, t.hidden.data());
  for (double& h : t.hidden) h = std::tanh(h);
  detail::affine(w2, b2, t.hidden, cfg.num_classes, cfg.hidden_dim, t.logits.data());
  return t;
}

inline ProbVector forward(const ModelParams& params, std::span<const double> x) {
  return softmax(forward_trace(params, x).logits);
}

inline Matrix forward_batch(const ModelParams& params, const Matrix& features) {
  Matrix out(features.rows(), params.config.num_classes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto p = forward(params, features.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

/// Accumulates scale * d(logits)/d(params)^T * dlogits into `grad`.
inline void backprop_logits(const ModelParams& params, std::span<const double> x,
                            const ForwardTrace& trace, std::span<const double> dlogits,
                            double scale, Vector& grad) {
  const auto& cfg = params.config;
  const auto d = cfg.input_dim;
  const auto k = cfg.num_classes;
  if (cfg.hidden_dim == 0) {
    double* gw = grad.data();
    double* gb = gw + k * d;
    for (std::size_t r = 0; r < k; ++r) {
      const double delta = scale * dlogits[r];
      gb[r] += delta;
      for (std::size_t c = 0; c < d; ++c) gw[r * d + c] += delta * x[c];
    }
    return;
  }
  const auto h = cfg.hidden_dim;
  const double* w2 = params.flat.data() + h * d + h;
  double* gw1 = grad.data();
  double* gb1 = gw1 + h * d;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + k * h;
  Vector dhidden(h, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const double delta = scale * dlogits[r];
    gb2[r] += delta;
    for (std::size_t c = 0; c < h; ++c) {
      gw2[r * h + c] += delta * trace.hidden[c];
      dhidden[c] += delta * w2[r * h + c];
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    const double pre = dhidden[r] * (1.0 - trace.hidden[r] * trace.hidden[r]);
    gb1[r] += pre;
    for (std::size_t c = 0; c < d; ++c) gw1[r * d + c] += pre * x[c];
  }
}

inline double l2_value(const ModelParams& params) {
  double acc = 0.0;
  std::size_t offset = 0;
  for (const auto& s : params.shapes) {
    if (s.is_weight)
      for (std::size_t i = 0; i < s.size(); ++i) acc += params.flat[offset + i] * params.flat[offset + i];
    offset += s.size();
  }
  return params.config.l2_penalty * acc;
}

inline void add_l2_grad(const ModelParams& params, Vector& grad) {
  const double lambda = params.config.l2_penalty;
  if (lambda == 0.0) return;
  std::size_t offset = 0;
  for (const auto& s : params.shapes) {
    if (s.is_weight)
      for (std::size_t i = 0; i < s.size(); ++i) grad[offset + i] += 2.0 * lambda * params.flat[offset + i];
    offset += s.size();
  }
}

inline void check_batch(const ModelParams& params, const Matrix& features,
                        std::span<const std::size_t> labels) {
  require(features.rows() > 0, ErrorKind::invalid_input, "empty batch");
  require(features.rows() == labels.size(), ErrorKind::invalid_input,
          "features/labels length mismatch");
  for (auto y : labels)
    require(y < params.config.num_classes, ErrorKind::invalid_input,
            "label " + std::to_string(y) + " >= num_classes");
}

/// Mean cross-entropy over the batch, without the penalty term.
inline double cross_entropy_loss(const ModelParams& params, const Matrix& features,
                                 std::span<const std::size_t> labels) {
  check_batch(params, features, labels);
  double acc = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i)
    acc += cross_entropy(forward(params, features.row(i)), labels[i]);
  return acc / static_cast<double>(features.rows());
}

inline Vector cross_entropy_grad(const ModelParams& params, const Matrix& features,
                                 std::span<const std::size_t> labels) {
  check_batch(params, features, labels);
  Vector grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto x = features.row(i);
    const auto trace = forward_trace(params, x);
    ProbVector dlogits = softmax(trace.logits);
    // The clamp in cross_entropy makes the loss flat once p_y < eps.
    if (dlogits[labels[i]] < kLogClamp) continue;
    dlogits[labels[i]] -= 1.0;
    backprop_logits(params, x, trace, dlogits, scale, grad);
  }
  return grad;
}

inline double supervised_loss(const ModelParams& params, const Matrix& features,
                              std::span<const std::size_t> labels) {
  return cross_entropy_loss(params, features, labels) + l2_value(params);
}

/// Gradient of mean cross-entropy + l2_penalty * ||W||^2.
inline Vector supervised_grad(const ModelParams& params, const Matrix& features,
                              std::span<const std::size_t> labels) {
  Vector grad = cross_entropy_grad(params, features, labels);
  add_l2_grad(params, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::size_t step_count = 0;
  Vector first_moment;
  Vector second_moment;

  static OptimizerState make(OptimizerKind kind, double learning_rate, std::size_t num_params) {
    OptimizerState s;
    s.kind = kind;
    s.learning_rate = learning_rate;
    if (kind == OptimizerKind::adam) {
      s.first_moment.assign(num_params, 0.0);
      s.second_moment.assign(num_params, 0.0);
    }
    return s;
  }
};

/// One optimizer step. Inputs are taken by value and the updated copies
/// returned, so callers never observe in-place mutation.
inline std::pair<ModelParams, OptimizerState> apply_update(ModelParams params,
                                                           std::span<const double> grad,
                                                           OptimizerState opt) {
  require(grad.size() == params.size(), ErrorKind::invalid_input,
          "gradient length " + std::to_string(grad.size()) + " != parameter count " +
              std::to_string(params.size()));
  ++opt.step_count;
  if (opt.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < grad.size(); ++i) params.flat[i] -= opt.learning_rate * grad[i];
    return {std::move(params), std::move(opt)};
  }
  if (opt.first_moment.size() != grad.size()) {
    opt.first_moment.assign(grad.size(), 0.0);
    opt.second_moment.assign(grad.size(), 0.0);
  }
  const double t = static_cast<double>(opt.step_count);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double& m = opt.first_moment[i];
    double& v = opt.second_moment[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad[i];
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params.flat[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
  }
  return {std::move(params), std::move(opt)};
}

/// Coordinatewise convex combination, e.g. FedAvg with weights n_c / N.
inline ModelParams weighted_average(std::span<const ModelParams> models,
                                    std::span<const double> weights) {
  require(!models.empty(), ErrorKind::invalid_input, "weighted_average of no models");
  require(models.size() == weights.size(), ErrorKind::invalid_input,
          "models/weights length mismatch");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorKind::invalid_input, "negative or non-finite weight");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::invalid_input, "weights do not sum to 1");
  for (const auto& m : models)
    require(m.compatible_with(models.front()), ErrorKind::invalid_input,
            "models are not aggregation-compatible");

  ModelParams out = models.front();
  std::fill(out.flat.begin(), out.flat.end(), 0.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    const double w = weights[m];
    const auto& src = models[m].flat;
    for (std::size_t i = 0; i < src.size(); ++i) out.flat[i] += w * src[i];
  }
  return out;
}

inline std::vector<double> fedavg_weights(std::span<const std::size_t> sizes) {
  double total = 0.0;
  for (auto n : sizes) total += static_cast<double>(n);
  require(total > 0.0, ErrorKind::invalid_input, "fedavg weights need a positive total size");
  std::vector<double> w;
  w.reserve(sizes.size());
  for (auto n : sizes) w.push_back(static_cast<double>(n) / total);
  return w;
}

}  // namespace imfed
