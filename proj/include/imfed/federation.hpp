#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "imfed/bank.hpp"
#include "imfed/classifier.hpp"
#include "imfed/data.hpp"
#include "imfed/metrics.hpp"
#include "imfed/numerics.hpp"
#include "imfed/transition.hpp"

namespace imfed {

enum class Algorithm {
  /// Dynamic bank + sub-bank classification through the prior transition.
  imfed_semi,
  /// Supervised clients using withheld labels (upper bound).
  fedavg_sl,
  /// Clients idle; only warm-up and server steps train the model.
  server_only,
  /// Cross-entropy on argmax pseudo-labels above tau_alpha.
  naive_pseudo,
};

enum class ModelSelector { accuracy, auc };

struct FedConfig {
  std::size_t rounds = 100;
  std::size_t local_epochs = 1;
  std::size_t warmup_epochs = 30;
  std::size_t batch_size = 32;
  double tau_alpha = 0.9;
  double tau_beta = 0.5;
  std::size_t server_steps_per_round = 5;
  Algorithm algorithm = Algorithm::imfed_semi;
  std::uint64_t seed = 0;

  OptimizerKind optimizer = OptimizerKind::adam;
  double client_learning_rate = 0.01;
  double server_learning_rate = 0.01;
  BankMode bank_mode = BankMode::dynamic;
  SplitMode split_mode = SplitMode::class_skewed;
  double split_skew = 0.8;
  bool persistent_split = false;
  bool weight_by_bank = false;
  ModelSelector selector = ModelSelector::accuracy;
  /// Worker threads for client training; results do not depend on it.
  std::size_t parallelism = 1;

  void validate() const {
    require(0.0 <= tau_beta && tau_beta <= tau_alpha && tau_alpha <= 1.0, ErrorKind::invalid_input,
            "thresholds must satisfy 0 <= tau_beta <= tau_alpha <= 1");
    require(local_epochs >= 1, ErrorKind::invalid_input, "local_epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::invalid_input, "batch_size must be >= 1");
    require(client_learning_rate > 0.0 && server_learning_rate > 0.0, ErrorKind::invalid_input,
            "learning rates must be > 0");
    require(parallelism >= 1, ErrorKind::invalid_input, "parallelism must be >= 1");
    require(split_skew >= 0.0 && split_skew <= 1.0, ErrorKind::invalid_input,
            "split_skew must lie in [0, 1]");
  }
};

struct ServerState {
  ModelParams global;
  OptimizerState optimizer;
};

struct ClientState {
  std::size_t client_id = 0;
  std::shared_ptr<const ClientShard> data;
  DynamicBank bank;
  ModelParams local_params;
};

struct ClientRoundStats {
  std::size_t client_id = 0;
  bool trained = false;
  std::size_t bank_size = 0;
  double coverage = 0.0;
  std::optional<double> local_loss;
  std::optional<double> prior_error;
  bool degenerate_prior = false;

  friend bool operator==(const ClientRoundStats&, const ClientRoundStats&) = default;
};

struct RoundLog {
  std::size_t round = 0;
  MetricReport validation;
  std::optional<MetricReport> test;
  std::vector<ClientRoundStats> clients;
  double server_loss = 0.0;
  double mean_coverage = 0.0;
  std::optional<double> mean_prior_error;

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

/// Read-only inputs shared by every round.
struct RoundEnvironment {
  const Dataset* server_data = nullptr;
  const Dataset* validation = nullptr;
  const Dataset* test = nullptr;
  /// C x K, used only for logging prior-estimation error.
  const Matrix* true_client_priors = nullptr;
};

namespace rng_tags {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t warmup = 2;
inline constexpr std::uint64_t client = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t local = 5;
}  // namespace rng_tags

/// Per-(client, round) stream; depends only on the seed and ids, never on
/// scheduling.
inline RngStream client_round_rng(std::uint64_t seed, std::size_t client_id, std::size_t round) {
  return RngStream(seed).child(rng_tags::client).child(client_id).child(round);
}

/// Mini-batch epochs over (features, targets). `grad_fn(params, X, y, &loss)`
/// returns the data-term gradient; the l2 term is added here so every local
/// objective is penalized the same way.
template <typename GradFn>
ModelParams train_epochs(ModelParams params, const Matrix& features,
                         std::span<const std::size_t> targets, GradFn&& grad_fn,
                         OptimizerState opt, std::size_t epochs, std::size_t batch_size,
                         RngStream& rng, double* mean_loss = nullptr) {
  require(features.rows() == targets.size() && !targets.empty(), ErrorKind::invalid_input,
          "training set empty or misaligned");
  std::vector<std::size_t> order(targets.size());
  double loss_total = 0.0;
  std::size_t batches = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix xb = features.select_rows(rows);
      std::vector<std::size_t> yb;
      yb.reserve(rows.size());
      for (auto r : rows) yb.push_back(targets[r]);
      double loss = 0.0;
      Vector grad = grad_fn(params, xb, std::span<const std::size_t>(yb), &loss);
      add_l2_grad(params, grad);
      loss_total += loss;
      ++batches;
      std::tie(params, opt) = apply_update(std::move(params), grad, std::move(opt));
    }
  }
  if (mean_loss) *mean_loss = loss_total / static_cast<double>(batches);
  return params;
}

inline OptimizerState client_optimizer(const FedConfig& config, std::size_t num_params) {
  return OptimizerState::make(config.optimizer, config.client_learning_rate, num_params);
}

/// Local sub-bank classification: targets are sub-bank indices, loss goes
/// through the prior transition with `ctx` frozen.
inline ModelParams local_train_sub_bank(ModelParams params, const Matrix& features,
                                        std::span<const std::size_t> proxy_labels,
                                        const TransitionContext& ctx, const FedConfig& config,
                                        RngStream& rng, double* mean_loss = nullptr) {
  auto grad_fn = [&ctx](const ModelParams& p, const Matrix& x, std::span<const std::size_t> y,
                        double* loss) { return sub_bank_loss_grad(p, x, y, ctx, loss); };
  const auto n = params.size();
  return train_epochs(std::move(params), features, proxy_labels, grad_fn, client_optimizer(config, n),
                      config.local_epochs, config.batch_size, rng, mean_loss);
}

/// Plain cross-entropy against hard targets (pseudo-labels or oracle labels).
inline ModelParams local_train_cross_entropy(ModelParams params, const Matrix& features,
                                             std::span<const std::size_t> targets,
                                             const FedConfig& config, RngStream& rng,
                                             double* mean_loss = nullptr) {
  auto grad_fn = [](const ModelParams& p, const Matrix& x, std::span<const std::size_t> y,
                    double* loss) {
    *loss = cross_entropy_loss(p, x, y);
    return cross_entropy_grad(p, x, y);
  };
  const auto n = params.size();
  return train_epochs(std::move(params), features, targets, grad_fn, client_optimizer(config, n),
                      config.local_epochs, config.batch_size, rng, mean_loss);
}

inline Predictions predict_client(const ModelParams& params, const ClientShard& shard) {
  Predictions preds;
  for (std::size_t i = 0; i < shard.size(); ++i)
    preds.emplace(shard.ids()[i], forward(params, shard.features().row(i)));
  return preds;
}

/// One client's work for a round, starting from the broadcast model already
/// stored in `client.local_params`.
inline ClientRoundStats client_update(ClientState& client, const FedConfig& config,
                                      std::size_t round, const Matrix* true_client_priors) {
  const ClientShard& shard = *client.data;
  const std::size_t K = client.local_params.config.num_classes;
  ClientRoundStats stats;
  stats.client_id = client.client_id;
  RngStream rng = client_round_rng(config.seed, client.client_id, round);

  if (config.algorithm == Algorithm::server_only) return stats;

  if (config.algorithm == Algorithm::fedavg_sl) {
    RngStream local_rng = rng.child(rng_tags::local);
    double loss = 0.0;
    client.local_params = local_train_cross_entropy(std::move(client.local_params),
                                                    shard.features(), shard.oracle_labels(),
                                                    config, local_rng, &loss);
    stats.trained = true;
    stats.bank_size = shard.size();
    stats.coverage = 1.0;
    stats.local_loss = loss;
    return stats;
  }

  const Predictions preds = predict_client(client.local_params, shard);

  if (config.algorithm == Algorithm::naive_pseudo) {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < shard.size(); ++i) {
      const auto e = make_entry(shard.ids()[i], preds.at(shard.ids()[i]));
      if (e.confidence > config.tau_alpha) {
        rows.push_back(i);
        targets.push_back(e.pseudo_label);
      }
    }
    stats.bank_size = rows.size();
    stats.coverage = static_cast<double>(rows.size()) / static_cast<double>(shard.size());
    if (rows.empty()) return stats;
    RngStream local_rng = rng.child(rng_tags::local);
    double loss = 0.0;
    client.local_params = local_train_cross_entropy(std::move(client.local_params),
                                                    shard.features().select_rows(rows), targets,
                                                    config, local_rng, &loss);
    stats.trained = true;
    stats.local_loss = loss;
    return stats;
  }

  // imfed_semi
  client.bank = update_bank(client.bank, preds);
  stats.bank_size = client.bank.size();
  stats.coverage = coverage(client.bank, shard.size());
  if (client.bank.size() < K) return stats;

  RngStream split_rng = rng.child(rng_tags::split);
  client.bank = split_sub_banks(client.bank, K, split_rng,
                                {config.split_mode, config.split_skew, config.persistent_split});
  PriorSet priors;
  try {
    priors = estimate_priors(client.bank, K);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::invalid_state) throw;
    return stats;  // an empty sub-bank; skip this round
  }
  stats.degenerate_prior = priors.degenerate;
  if (true_client_priors) stats.prior_error = prior_error(priors, true_client_priors->row(client.client_id));

  std::unordered_map<SampleId, std::size_t> row_of;
  for (std::size_t i = 0; i < shard.size(); ++i) row_of.emplace(shard.ids()[i], i);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> proxy;
  rows.reserve(client.bank.size());
  proxy.reserve(client.bank.size());
  for (const auto& [id, e] : client.bank.entries) {
    rows.push_back(row_of.at(id));
    proxy.push_back(*e.sub_bank);
  }
  TransitionContext ctx{std::move(priors), true};
  RngStream local_rng = rng.child(rng_tags::local);
  double loss = 0.0;
  client.local_params = local_train_sub_bank(std::move(client.local_params),
                                             shard.features().select_rows(rows), proxy, ctx, config,
                                             local_rng, &loss);
  stats.trained = true;
  stats.local_loss = loss;
  return stats;
}

inline void check_server_data(const Dataset& server_data, std::size_t num_classes) {
  require(server_data.labeled() && server_data.size() > 0, ErrorKind::invalid_setup,
          "server data must be labeled and non-empty");
  const auto counts = server_data.class_counts();
  for (std::size_t k = 0; k < num_classes; ++k)
    require(k < counts.size() && counts[k] > 0, ErrorKind::invalid_setup,
            "server data has no samples of class " + std::to_string(k));
}

/// Supervised-only pre-training of the global model on the server's labels.
inline ServerState warmup(const Dataset& server_data, const ModelConfig& model_config,
                          const FedConfig& config) {
  config.validate();
  check_server_data(server_data, model_config.num_classes);
  RngStream init_rng = RngStream(config.seed).child(rng_tags::init);
  ServerState server{ModelParams::initialize(model_config, init_rng), {}};
  server.optimizer =
      OptimizerState::make(config.optimizer, config.server_learning_rate, server.global.size());
  if (config.warmup_epochs == 0) return server;

  RngStream rng = RngStream(config.seed).child(rng_tags::warmup);
  std::vector<std::size_t> order(server_data.size());
  for (std::size_t e = 0; e < config.warmup_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix xb = server_data.features.select_rows(rows);
      std::vector<std::size_t> yb;
      for (auto r : rows) yb.push_back((*server_data.labels)[r]);
      const Vector grad = supervised_grad(server.global, xb, yb);
      std::tie(server.global, server.optimizer) =
          apply_update(std::move(server.global), grad, std::move(server.optimizer));
    }
  }
  return server;
}

inline std::vector<ClientState> make_clients(const FederationData& data, const ModelParams& global,
                                             const FedConfig& config) {
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    ClientState s;
    s.client_id = c;
    s.data = std::make_shared<const ClientShard>(data.clients[c]);
    s.bank = DynamicBank(config.tau_alpha, config.tau_beta, config.bank_mode);
    s.local_params = global;
    clients.push_back(std::move(s));
  }
  return clients;
}

struct RoundResult {
  ServerState server;
  std::vector<ClientState> clients;
  RoundLog log;
};

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads; the first
/// exception (by index) is rethrown.
template <typename Fn>
void for_each_client(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) body(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// broadcast -> per-client bank refresh and local training -> FedAvg ->
/// server supervised steps -> log.
inline RoundResult run_round(ServerState server, std::vector<ClientState> clients,
                             const RoundEnvironment& env, const FedConfig& config,
                             std::size_t round) {
  require(env.server_data && env.validation, ErrorKind::invalid_input,
          "round environment needs server and validation data");
  require(!clients.empty(), ErrorKind::protocol_error, "no clients");

  for (auto& c : clients) {
    require(c.local_params.compatible_with(server.global), ErrorKind::protocol_error,
            "client " + std::to_string(c.client_id) + " incompatible with global model");
    c.local_params = server.global;
  }

  std::vector<ClientRoundStats> stats(clients.size());
  for_each_client(clients.size(), config.parallelism, [&](std::size_t i) {
    stats[i] = client_update(clients[i], config, round, env.true_client_priors);
  });

  // Aggregate in client-id order so the floating-point sum does not depend on
  // how the caller ordered `clients`.
  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return clients[a].client_id < clients[b].client_id; });
  std::vector<std::size_t> sizes;
  for (auto i : order)
    sizes.push_back(config.weight_by_bank ? stats[i].bank_size : clients[i].data->size());
  if (config.weight_by_bank && std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 0)
    for (std::size_t j = 0; j < order.size(); ++j) sizes[j] = clients[order[j]].data->size();
  const auto weights = fedavg_weights(sizes);

  std::vector<ModelParams> locals;
  locals.reserve(clients.size());
  for (auto i : order) locals.push_back(clients[i].local_params);
  try {
    server.global = weighted_average(locals, weights);
  } catch (const Error& e) {
    throw Error(ErrorKind::protocol_error, std::string("aggregation failed: ") + e.what());
  }

  const Dataset& sd = *env.server_data;
  for (std::size_t s = 0; s < config.server_steps_per_round; ++s) {
    const Vector grad = supervised_grad(server.global, sd.features, *sd.labels);
    std::tie(server.global, server.optimizer) =
        apply_update(std::move(server.global), grad, std::move(server.optimizer));
  }

  RoundLog log;
  log.round = round;
  log.server_loss = cross_entropy_loss(server.global, sd.features, *sd.labels);
  log.validation = evaluate(server.global, *env.validation);
  if (env.test) log.test = evaluate(server.global, *env.test);
  double cov = 0.0;
  double err = 0.0;
  std::size_t with_err = 0;
  for (const auto& s : stats) {
    cov += s.coverage;
    if (s.prior_error) {
      err += *s.prior_error;
      ++with_err;
    }
  }
  log.mean_coverage = cov / static_cast<double>(stats.size());
  if (with_err) log.mean_prior_error = err / static_cast<double>(with_err);
  log.clients = std::move(stats);
  return {std::move(server), std::move(clients), std::move(log)};
}

struct ExperimentResult {
  ModelParams best;
  /// 0 when the warm-up model was never beaten.
  std::size_t best_round = 0;
  MetricReport best_validation;
  ModelParams final_model;
  std::vector<RoundLog> logs;
};

inline double selection_score(const MetricReport& r, ModelSelector selector) {
  return selector == ModelSelector::accuracy ? r.accuracy : r.auc;
}

using RoundObserver = std::function<void(const RoundLog&, const std::vector<ClientState>&)>;

/// Warm-up followed by `config.rounds` rounds; keeps the model with the best
/// validation score (ties keep the earlier one).
inline ExperimentResult run_experiment(const FederationData& data, const ModelConfig& model_config,
                                       const FedConfig& config,
                                       const RoundObserver& observer = {}) {
  config.validate();
  require(model_config.num_classes == data.num_classes(), ErrorKind::invalid_input,
          "model and data disagree on the number of classes");
  ServerState server = warmup(data.server_labeled, model_config, config);
  std::vector<ClientState> clients = make_clients(data, server.global, config);
  const RoundEnvironment env{&data.server_labeled, &data.validation, &data.test,
                             &data.true_client_priors};

  ExperimentResult result;
  result.best = server.global;
  result.best_validation = evaluate(server.global, data.validation);
  for (std::size_t t = 1; t <= config.rounds; ++t) {
    auto step = run_round(std::move(server), std::move(clients), env, config, t);
    server = std::move(step.server);
    clients = std::move(step.clients);
    if (observer) observer(step.log, clients);
    if (selection_score(step.log.validation, config.selector) >
        selection_score(result.best_validation, config.selector)) {
      result.best = server.global;
      result.best_round = t;
      result.best_validation = step.log.validation;
    }
    result.logs.push_back(std::move(step.log));
  }
  result.final_model = server.global;
  return result;
}

}  // namespace imfed
