#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "imfed/data.hpp"
#include "imfed/federation.hpp"
#include "imfed/io.hpp"

namespace imfed {

struct DataSpec {
  enum class Source { synthetic, csv };
  Source source = Source::synthetic;
  // synthetic
  std::size_t num_classes = 3;
  std::size_t dim = 10;
  std::vector<std::size_t> samples_per_class;
  double separation = 2.0;
  // csv
  std::string path;
  std::string label_column = "label";
};

struct ExperimentConfig {
  DataSpec data;
  PartitionSpec partition;
  /// input_dim / num_classes are filled in from the data.
  ModelConfig model;
  FedConfig federation;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs";
  std::optional<std::string> preset;
  bool export_banks = false;
};

// --- logging ------------------------------------------------------------------

/// IMFED_LOG_LEVEL: 0 silent, 1 progress (default), 2 per-round detail.
inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("IMFED_LOG_LEVEL");
    return v ? std::atoi(v) : 1;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[imfed] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[imfed] " << msg << '\n';
}

// --- enum names ---------------------------------------------------------------

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::imfed_semi: return "imfed_semi";
    case Algorithm::fedavg_sl: return "fedavg_sl";
    case Algorithm::server_only: return "server_only";
    case Algorithm::naive_pseudo: return "naive_pseudo";
  }
  return "?";
}

inline const char* to_string(BankMode m) {
  return m == BankMode::dynamic ? "dynamic" : "fixed_threshold";
}

inline const char* to_string(SplitMode m) {
  return m == SplitMode::uniform ? "uniform" : "class_skewed";
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline const char* to_string(ModelSelector s) {
  return s == ModelSelector::accuracy ? "accuracy" : "auc";
}

namespace detail {

template <typename E, std::size_t N>
E parse_enum(const std::string& field, const std::string& value, const E (&options)[N]) {
  std::string valid;
  for (E e : options) {
    if (value == to_string(e)) return e;
    valid += (valid.empty() ? "" : ", ") + std::string(to_string(e));
  }
  throw Error(ErrorKind::config_error, field + ": unknown value '" + value + "' (valid: " + valid + ")");
}

/// Typed field access that reports the dotted path on failure and rejects
/// keys the schema does not know.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::config_error, where() + ": expected an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw Error(ErrorKind::config_error, field(key) + ": required field missing");
    return convert<T>(key);
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw Error(ErrorKind::config_error, field(key) + ": unknown field");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::config_error, field(key) + ": wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void config_check(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorKind::config_error, msg);
}

}  // namespace detail

// --- config (de)serialization -------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
  json data;
  if (c.data.source == DataSpec::Source::synthetic) {
    data = {{"source", "synthetic"},
            {"num_classes", c.data.num_classes},
            {"dim", c.data.dim},
            {"samples_per_class", c.data.samples_per_class},
            {"separation", c.data.separation}};
  } else {
    data = {{"source", "csv"}, {"path", c.data.path}, {"label_column", c.data.label_column}};
  }
  const auto& p = c.partition;
  const auto& f = c.federation;
  return {
      {"data", data},
      {"partition",
       {{"num_clients", p.num_clients},
        {"gamma", p.gamma},
        {"proportion_bounds", {p.proportion_lo, p.proportion_hi}},
        {"server_per_class", p.server_per_class},
        {"max_resample_attempts", p.max_resample_attempts},
        {"validation_fraction", p.validation_fraction},
        {"test_fraction", p.test_fraction}}},
      {"model", {{"hidden_dim", c.model.hidden_dim}, {"l2_penalty", c.model.l2_penalty}}},
      {"federation",
       {{"algorithm", to_string(f.algorithm)},
        {"rounds", f.rounds},
        {"local_epochs", f.local_epochs},
        {"warmup_epochs", f.warmup_epochs},
        {"batch_size", f.batch_size},
        {"tau_alpha", f.tau_alpha},
        {"tau_beta", f.tau_beta},
        {"server_steps_per_round", f.server_steps_per_round},
        {"optimizer", to_string(f.optimizer)},
        {"client_learning_rate", f.client_learning_rate},
        {"server_learning_rate", f.server_learning_rate},
        {"bank_mode", to_string(f.bank_mode)},
        {"split_mode", to_string(f.split_mode)},
        {"split_skew", f.split_skew},
        {"persistent_split", f.persistent_split},
        {"weight_by_bank", f.weight_by_bank},
        {"selector", to_string(f.selector)},
        {"parallelism", f.parallelism}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
      {"preset", c.preset ? json(*c.preset) : json(nullptr)},
      {"export_banks", c.export_banks}};
}

/// Checks every nested invariant; messages name the offending field path.
inline void validate(const ExperimentConfig& c) {
  using detail::config_check;
  if (c.data.source == DataSpec::Source::synthetic) {
    config_check(c.data.num_classes >= 2, "data.num_classes: must be >= 2");
    config_check(c.data.dim >= 2, "data.dim: must be >= 2");
    config_check(c.data.separation > 0.0, "data.separation: must be > 0");
    config_check(c.data.samples_per_class.size() == c.data.num_classes,
                 "data.samples_per_class: needs one count per class");
  } else {
    config_check(!c.data.path.empty(), "data.path: required for csv source");
  }
  const auto& p = c.partition;
  config_check(p.num_clients >= 1, "partition.num_clients: must be >= 1");
  config_check(p.gamma > 0.0, "partition.gamma: must be > 0");
  config_check(0.0 <= p.proportion_lo && p.proportion_lo < p.proportion_hi && p.proportion_hi <= 1.0,
               "partition.proportion_bounds: must satisfy 0 <= lo < hi <= 1");
  config_check(p.proportion_lo * static_cast<double>(p.num_clients) <= 1.0 + 1e-12,
               "partition.proportion_bounds: lo * num_clients must be <= 1");
  config_check(p.max_resample_attempts >= 1, "partition.max_resample_attempts: must be >= 1");
  config_check(p.validation_fraction >= 0.0 && p.test_fraction >= 0.0 &&
                   p.validation_fraction + p.test_fraction < 1.0,
               "partition.validation_fraction/test_fraction: must be >= 0 and sum below 1");
  config_check(c.model.l2_penalty >= 0.0, "model.l2_penalty: must be >= 0");
  const auto& f = c.federation;
  config_check(f.tau_beta <= f.tau_alpha,
               "federation.tau_beta (" + json(f.tau_beta).dump() + ") must be <= federation.tau_alpha (" +
                   json(f.tau_alpha).dump() + ")");
  config_check(f.tau_beta >= 0.0, "federation.tau_beta: must be >= 0");
  config_check(f.tau_alpha <= 1.0, "federation.tau_alpha: must be <= 1");
  config_check(f.local_epochs >= 1, "federation.local_epochs: must be >= 1");
  config_check(f.batch_size >= 1, "federation.batch_size: must be >= 1");
  config_check(f.client_learning_rate > 0.0, "federation.client_learning_rate: must be > 0");
  config_check(f.server_learning_rate > 0.0, "federation.server_learning_rate: must be > 0");
  config_check(f.parallelism >= 1, "federation.parallelism: must be >= 1");
  config_check(f.split_skew >= 0.0 && f.split_skew <= 1.0, "federation.split_skew: must lie in [0, 1]");
  config_check(!c.seeds.empty(), "seeds: must be non-empty");
  config_check(!c.output_dir.empty(), "output_dir: must be non-empty");
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  using detail::Reader;
  ExperimentConfig c;
  Reader root(j, "");

  Reader data = root.child("data");
  const auto source = data.get<std::string>("source", "synthetic");
  if (source == "synthetic") {
    c.data.source = DataSpec::Source::synthetic;
    c.data.num_classes = data.get<std::size_t>("num_classes", c.data.num_classes);
    c.data.dim = data.get<std::size_t>("dim", c.data.dim);
    c.data.separation = data.get<double>("separation", c.data.separation);
    const json* spc = nullptr;
    if (data.has("samples_per_class")) spc = &j.at("data").at("samples_per_class");
    if (spc && spc->is_number_unsigned()) {
      c.data.samples_per_class.assign(c.data.num_classes, data.get<std::size_t>("samples_per_class", 0));
    } else {
      c.data.samples_per_class = data.get<std::vector<std::size_t>>("samples_per_class", {});
    }
  } else if (source == "csv") {
    c.data.source = DataSpec::Source::csv;
    c.data.path = data.required<std::string>("path");
    c.data.label_column = data.get<std::string>("label_column", c.data.label_column);
  } else {
    throw Error(ErrorKind::config_error, "data.source: unknown value '" + source + "' (valid: synthetic, csv)");
  }
  data.finish();

  Reader part = root.child("partition");
  auto& p = c.partition;
  p.num_clients = part.get<std::size_t>("num_clients", p.num_clients);
  p.gamma = part.get<double>("gamma", p.gamma);
  const auto bounds = part.get<std::vector<double>>("proportion_bounds", {p.proportion_lo, p.proportion_hi});
  detail::config_check(bounds.size() == 2, "partition.proportion_bounds: expected [lo, hi]");
  p.proportion_lo = bounds[0];
  p.proportion_hi = bounds[1];
  p.server_per_class = part.get<std::size_t>("server_per_class", p.server_per_class);
  p.max_resample_attempts = part.get<std::size_t>("max_resample_attempts", p.max_resample_attempts);
  p.validation_fraction = part.get<double>("validation_fraction", p.validation_fraction);
  p.test_fraction = part.get<double>("test_fraction", p.test_fraction);
  part.finish();

  Reader model = root.child("model");
  c.model.hidden_dim = model.get<std::size_t>("hidden_dim", c.model.hidden_dim);
  c.model.l2_penalty = model.get<double>("l2_penalty", c.model.l2_penalty);
  model.finish();

  Reader fed = root.child("federation");
  auto& f = c.federation;
  static constexpr Algorithm algorithms[] = {Algorithm::imfed_semi, Algorithm::fedavg_sl,
                                             Algorithm::server_only, Algorithm::naive_pseudo};
  static constexpr BankMode modes[] = {BankMode::dynamic, BankMode::fixed_threshold};
  static constexpr OptimizerKind optimizers[] = {OptimizerKind::adam, OptimizerKind::sgd};
  static constexpr ModelSelector selectors[] = {ModelSelector::accuracy, ModelSelector::auc};
  f.algorithm = detail::parse_enum(fed.field("algorithm"),
                                   fed.get<std::string>("algorithm", to_string(f.algorithm)), algorithms);
  f.rounds = fed.get<std::size_t>("rounds", f.rounds);
  f.local_epochs = fed.get<std::size_t>("local_epochs", f.local_epochs);
  f.warmup_epochs = fed.get<std::size_t>("warmup_epochs", f.warmup_epochs);
  f.batch_size = fed.get<std::size_t>("batch_size", f.batch_size);
  f.tau_alpha = fed.get<double>("tau_alpha", f.tau_alpha);
  f.tau_beta = fed.get<double>("tau_beta", f.tau_beta);
  f.server_steps_per_round = fed.get<std::size_t>("server_steps_per_round", f.server_steps_per_round);
  f.optimizer = detail::parse_enum(fed.field("optimizer"),
                                   fed.get<std::string>("optimizer", to_string(f.optimizer)), optimizers);
  f.client_learning_rate = fed.get<double>("client_learning_rate", f.client_learning_rate);
  f.server_learning_rate = fed.get<double>("server_learning_rate", f.server_learning_rate);
  f.bank_mode = detail::parse_enum(fed.field("bank_mode"),
                                   fed.get<std::string>("bank_mode", to_string(f.bank_mode)), modes);
  static constexpr SplitMode split_modes[] = {SplitMode::class_skewed, SplitMode::uniform};
  f.split_mode = detail::parse_enum(fed.field("split_mode"),
                                    fed.get<std::string>("split_mode", to_string(f.split_mode)), split_modes);
  f.split_skew = fed.get<double>("split_skew", f.split_skew);
  f.persistent_split = fed.get<bool>("persistent_split", f.persistent_split);
  f.weight_by_bank = fed.get<bool>("weight_by_bank", f.weight_by_bank);
  f.selector = detail::parse_enum(fed.field("selector"),
                                  fed.get<std::string>("selector", to_string(f.selector)), selectors);
  f.parallelism = fed.get<std::size_t>("parallelism", f.parallelism);
  fed.finish();

  c.seeds = root.get<std::vector<std::uint64_t>>("seeds", c.seeds);
  c.output_dir = root.get<std::string>("output_dir", c.output_dir);
  const auto preset_name = root.get<std::string>("preset", "");
  if (!preset_name.empty()) c.preset = preset_name;
  c.export_banks = root.get<bool>("export_banks", c.export_banks);
  root.finish();

  validate(c);
  return c;
}

// --- presets ------------------------------------------------------------------

/// Smallest per-class pool that leaves `unlabeled` samples per class after the
/// validation/test carve and the server's labeled share.
inline std::size_t pool_size_for(std::size_t unlabeled, const PartitionSpec& p) {
  for (std::size_t n = unlabeled;; ++n) {
    const auto d = static_cast<double>(n);
    const auto carved = static_cast<std::size_t>(std::llround(d * p.validation_fraction)) +
                        static_cast<std::size_t>(std::llround(d * p.test_fraction)) + p.server_per_class;
    if (n >= carved && n - carved >= unlabeled) return n;
  }
}

inline void size_synthetic_pool(ExperimentConfig& c, std::size_t unlabeled_per_client) {
  const std::size_t k = c.data.num_classes;
  const std::size_t per_class = (unlabeled_per_client * c.partition.num_clients + k - 1) / k;
  c.data.samples_per_class.assign(k, pool_size_for(per_class, c.partition));
}

/// Separation giving roughly 90% Bayes accuracy for three equidistant unit
/// Gaussian classes (see tests/test_data.cpp for the Monte Carlo check).
inline constexpr double kDeskSeparation = 1.8;

/// The desk-scale benchmark: 3 classes in 10-d, 5 clients x ~600 unlabeled,
/// Dirichlet(1.5) skew bounded to [0.05, 0.5], 20 server labels per class.
inline ExperimentConfig desk_benchmark() {
  ExperimentConfig c;
  c.data.source = DataSpec::Source::synthetic;
  c.data.num_classes = 3;
  c.data.dim = 10;
  c.data.separation = kDeskSeparation;
  c.partition.num_clients = 5;
  c.partition.gamma = 1.5;
  c.partition.proportion_lo = 0.05;
  c.partition.proportion_hi = 0.5;
  c.partition.server_per_class = 20;
  size_synthetic_pool(c, 600);
  c.model.hidden_dim = 0;
  c.model.l2_penalty = 1e-2;
  auto& f = c.federation;
  f.optimizer = OptimizerKind::sgd;
  f.client_learning_rate = 0.1;
  f.server_learning_rate = 0.1;
  f.split_mode = SplitMode::class_skewed;
  f.split_skew = 0.8;
  f.algorithm = Algorithm::imfed_semi;
  f.rounds = 100;
  f.local_epochs = 1;
  f.warmup_epochs = 30;
  f.batch_size = 32;
  f.tau_alpha = 0.9;
  f.tau_beta = 0.5;
  f.server_steps_per_round = 5;
  c.seeds = {1, 2, 3};
  return c;
}

struct NamedConfig {
  std::string name;
  ExperimentConfig config;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"main",          "ablate_fixed_bank", "sweep_tau_beta",
                                              "sweep_labeled", "sweep_clients",     "baselines"};
  return names;
}

inline std::vector<NamedConfig> preset(const std::string& name) {
  ExperimentConfig base = desk_benchmark();
  base.preset = name;
  base.output_dir = "runs/" + name;
  std::vector<NamedConfig> out;
  auto fmt = [](double v) { return json(v).dump(); };

  if (name == "main") {
    out.push_back({"imfed_semi", base});
  } else if (name == "ablate_fixed_bank") {
    out.push_back({"dynamic", base});
    ExperimentConfig fixed = base;
    fixed.federation.bank_mode = BankMode::fixed_threshold;
    fixed.federation.tau_alpha = 0.9;
    out.push_back({"fixed_threshold", fixed});
  } else if (name == "sweep_tau_beta") {
    for (double tb : {0.3, 0.4, 0.5, 0.6, 0.7}) {
      ExperimentConfig c = base;
      c.federation.tau_beta = tb;
      out.push_back({"tau_beta_" + fmt(tb), c});
    }
  } else if (name == "sweep_labeled") {
    for (std::size_t sk : {5, 10, 15, 25, 50}) {
      ExperimentConfig c = base;
      c.partition.server_per_class = sk;
      size_synthetic_pool(c, 600);
      out.push_back({"server_per_class_" + std::to_string(sk), c});
    }
  } else if (name == "sweep_clients") {
    for (std::size_t n : {5, 10, 15, 20}) {
      ExperimentConfig c = base;
      c.partition.num_clients = n;
      // keep lo * C <= 1 and the bounded Dirichlet draw feasible as C grows
      c.partition.proportion_lo = std::min(0.05, 0.25 / static_cast<double>(n));
      size_synthetic_pool(c, 600);
      out.push_back({"clients_" + std::to_string(n), c});
    }
  } else if (name == "baselines") {
    for (Algorithm a : {Algorithm::fedavg_sl, Algorithm::server_only, Algorithm::naive_pseudo,
                        Algorithm::imfed_semi}) {
      ExperimentConfig c = base;
      c.federation.algorithm = a;
      out.push_back({to_string(a), c});
    }
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error(ErrorKind::config_error, "unknown preset '" + name + "' (valid: " + valid + ")");
  }
  for (auto& nc : out) validate(nc.config);
  return out;
}

// --- running ------------------------------------------------------------------

inline Dataset build_dataset(const DataSpec& spec, std::uint64_t seed) {
  if (spec.source == DataSpec::Source::csv) return load_csv(spec.path, spec.label_column);
  RngStream rng = RngStream(seed).child(0xDA7A);
  return generate_gaussian_mixture(spec.num_classes, spec.dim, spec.samples_per_class, spec.separation, rng);
}

inline FederationData build_federation(const ExperimentConfig& c, std::uint64_t seed) {
  const Dataset full = build_dataset(c.data, seed);
  RngStream rng = RngStream(seed).child(0x9A27);
  return dirichlet_partition(full, c.partition, rng);
}

inline ModelConfig resolve_model_config(const ExperimentConfig& c, const FederationData& data) {
  ModelConfig m = c.model;
  m.input_dim = data.server_labeled.dim();
  m.num_classes = data.num_classes();
  return m;
}

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t best_round = 0;
  MetricReport validation;
  MetricReport test;

  friend bool operator==(const SeedResult&, const SeedResult&) = default;
};

struct Summary {
  std::string algorithm;
  std::optional<std::string> preset;
  std::vector<SeedResult> runs;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;

  friend bool operator==(const Summary&, const Summary&) = default;
};

inline std::map<std::string, double> metric_map(const MetricReport& r) {
  return {{"auc", r.auc},
          {"accuracy", r.accuracy},
          {"specificity", r.specificity},
          {"sensitivity", r.sensitivity},
          {"f1", r.f1}};
}

/// Mean and sample standard deviation (n - 1; zero for a single run) of the
/// test metrics across seeds.
inline Summary summarize(const std::string& algorithm, const std::optional<std::string>& preset_name,
                         std::vector<SeedResult> runs) {
  Summary s;
  s.algorithm = algorithm;
  s.preset = preset_name;
  s.runs = std::move(runs);
  const auto n = static_cast<double>(s.runs.size());
  for (const auto& [key, _] : metric_map(MetricReport{})) {
    double sum = 0.0;
    for (const auto& r : s.runs) sum += metric_map(r.test).at(key);
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& r : s.runs) {
      const double d = metric_map(r.test).at(key) - mean;
      sq += d * d;
    }
    s.mean[key] = mean;
    s.stddev[key] = s.runs.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  }
  return s;
}

inline json to_json(const Summary& s) {
  json runs = json::array();
  for (const auto& r : s.runs)
    runs.push_back({{"seed", r.seed},
                    {"best_round", r.best_round},
                    {"validation", to_json(r.validation)},
                    {"test", to_json(r.test)}});
  return {{"algorithm", s.algorithm},
          {"preset", s.preset ? json(*s.preset) : json(nullptr)},
          {"runs", runs},
          {"mean", s.mean},
          {"std", s.stddev}};
}

inline Summary summary_from_json(const json& j) {
  Summary s;
  s.algorithm = j.at("algorithm").get<std::string>();
  if (!j.at("preset").is_null()) s.preset = j.at("preset").get<std::string>();
  for (const auto& r : j.at("runs"))
    s.runs.push_back({r.at("seed").get<std::uint64_t>(), r.at("best_round").get<std::size_t>(),
                      metric_report_from_json(r.at("validation")),
                      metric_report_from_json(r.at("test"))});
  s.mean = j.at("mean").get<std::map<std::string, double>>();
  s.stddev = j.at("std").get<std::map<std::string, double>>();
  return s;
}

struct SeedRun {
  SeedResult result;
  std::vector<RoundLog> logs;
  ModelParams best_model;
};

/// One seed end to end: data, partition, training, test evaluation of the
/// validation-selected model. Writes per-seed artifacts when `out_dir` is set.
inline SeedRun run_seed(const ExperimentConfig& c, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  const FederationData data = build_federation(c, seed);
  const ModelConfig model = resolve_model_config(c, data);
  FedConfig fed = c.federation;
  fed.seed = seed;

  std::optional<std::ofstream> banks;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text((*out_dir / "partition.json").string(), partition_manifest(data).dump(2) + "\n");
    if (c.export_banks) banks.emplace(*out_dir / "banks.jsonl", std::ios::binary | std::ios::trunc);
  }
  RoundObserver observer = [&](const RoundLog& log, const std::vector<ClientState>& clients) {
    log_debug("seed " + std::to_string(seed) + " round " + std::to_string(log.round) +
              " val_acc=" + json(log.validation.accuracy).dump() +
              " coverage=" + json(log.mean_coverage).dump());
    if (banks)
      for (const auto& cl : clients) *banks << bank_snapshot(cl.bank, cl.client_id).dump() << '\n';
  };
  ExperimentResult r = run_experiment(data, model, fed, observer);

  SeedRun run;
  run.result.seed = seed;
  run.result.best_round = r.best_round;
  run.result.validation = r.best_validation;
  run.result.test = evaluate(r.best, data.test);
  run.best_model = r.best;
  run.logs = std::move(r.logs);

  if (out_dir) {
    std::ostringstream jsonl, csv;
    write_rounds_jsonl(jsonl, run.logs);
    write_rounds_csv(csv, run.logs);
    write_text((*out_dir / "rounds.jsonl").string(), jsonl.str());
    write_text((*out_dir / "rounds.csv").string(), csv.str());
    write_text((*out_dir / "best_model.json").string(), to_json(run.best_model).dump() + "\n");
  }
  return run;
}

/// All seeds, then `summary.json` in `output_dir`.
inline Summary run_config(const ExperimentConfig& c) {
  validate(c);
  const std::filesystem::path root(c.output_dir);
  std::filesystem::create_directories(root);
  write_text((root / "config.json").string(), to_json(c).dump(2) + "\n");
  std::vector<SeedResult> results;
  for (auto seed : c.seeds) {
    log_info(std::string(to_string(c.federation.algorithm)) + " seed " + std::to_string(seed));
    results.push_back(run_seed(c, seed, root / std::to_string(seed)).result);
  }
  Summary s = summarize(to_string(c.federation.algorithm), c.preset, std::move(results));
  write_text((root / "summary.json").string(), to_json(s).dump(2) + "\n");
  log_info("test accuracy " + json(s.mean.at("accuracy")).dump() + " +- " +
           json(s.stddev.at("accuracy")).dump() + " -> " + (root / "summary.json").string());
  return s;
}

}  // namespace imfed
