#pragma once

#include <map>
#include <optional>
#include <vector>

#include "imfed/data.hpp"
#include "imfed/numerics.hpp"

namespace imfed {

struct BankEntry {
  SampleId sample_id = 0;
  /// Max class probability from the most recent prediction pass.
  double confidence = 0.0;
  std::size_t pseudo_label = 0;
  std::optional<std::size_t> sub_bank;

  friend bool operator==(const BankEntry&, const BankEntry&) = default;
};

enum class BankMode {
  /// Evict on previous confidence < tau_alpha, admit on current > tau_beta.
  dynamic,
  /// Rebuilt every round from samples whose current confidence > tau_alpha.
  fixed_threshold,
};

using Predictions = std::map<SampleId, ProbVector>;

struct DynamicBank {
  std::map<SampleId, BankEntry> entries;
  std::size_t round = 0;
  double tau_alpha = 0.9;
  double tau_beta = 0.5;
  BankMode mode = BankMode::dynamic;

  DynamicBank() = default;
  DynamicBank(double alpha, double beta, BankMode m = BankMode::dynamic)
      : tau_alpha(alpha), tau_beta(beta), mode(m) {
    require(0.0 <= tau_beta && tau_beta <= tau_alpha && tau_alpha <= 1.0, ErrorKind::invalid_input,
            "thresholds must satisfy 0 <= tau_beta <= tau_alpha <= 1");
  }

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  bool contains(SampleId id) const { return entries.count(id) != 0; }

  std::vector<SampleId> ids() const {
    std::vector<SampleId> out;
    out.reserve(entries.size());
    for (const auto& [id, e] : entries) out.push_back(id);
    return out;
  }
};

inline BankEntry make_entry(SampleId id, const ProbVector& p) {
  const auto k = argmax(p);
  return {id, p[k], k, std::nullopt};
}

/// One round of bank maintenance. The retention test reads the confidence
/// stored from the previous pass; admission reads the current one. Every
/// surviving entry is refreshed from `predictions`.
inline DynamicBank update_bank(const DynamicBank& bank, const Predictions& predictions) {
  for (const auto& [id, e] : bank.entries)
    require(predictions.count(id) != 0, ErrorKind::invalid_input,
            "no prediction for banked sample " + std::to_string(id));

  DynamicBank next = bank;
  next.entries.clear();
  next.round = bank.round + 1;

  if (bank.mode == BankMode::dynamic) {
    for (const auto& [id, e] : bank.entries) {
      if (e.confidence < bank.tau_alpha) continue;
      BankEntry fresh = make_entry(id, predictions.at(id));
      fresh.sub_bank = e.sub_bank;
      next.entries.emplace(id, fresh);
    }
  }
  const double admit = bank.mode == BankMode::dynamic ? bank.tau_beta : bank.tau_alpha;
  for (const auto& [id, p] : predictions) {
    const auto entry = make_entry(id, p);
    if (entry.confidence > admit && !next.contains(id)) next.entries.emplace(id, entry);
  }
  return next;
}

enum class SplitMode {
  /// Membership uniformly at random; sub-bank class mixes differ only by
  /// sampling noise.
  uniform,
  /// Entries prefer the sub-bank matching their pseudo-label with
  /// probability `skew`, so sub-bank class mixes differ systematically.
  class_skewed,
};

struct SplitOptions {
  SplitMode mode = SplitMode::class_skewed;
  double skew = 0.8;
  /// Keep existing assignments and only deal out new entries.
  bool persistent = false;
};

/// Splits the bank into K non-overlapping sub-banks whose sizes differ by at
/// most one (in persistent mode, as close to that as retained assignments
/// allow).
inline DynamicBank split_sub_banks(const DynamicBank& bank, std::size_t num_sub_banks,
                                   RngStream& rng, const SplitOptions& options = {}) {
  require(num_sub_banks >= 1, ErrorKind::invalid_input, "need at least one sub-bank");
  require(bank.size() >= num_sub_banks, ErrorKind::insufficient_bank,
          "bank holds " + std::to_string(bank.size()) + " samples, fewer than " +
              std::to_string(num_sub_banks) + " sub-banks");
  require(options.skew >= 0.0 && options.skew <= 1.0, ErrorKind::invalid_input,
          "split skew must lie in [0, 1]");
  const std::size_t K = num_sub_banks;
  DynamicBank out = bank;
  std::vector<SampleId> pending;
  std::vector<std::size_t> sizes(K, 0);
  for (auto& [id, e] : out.entries) {
    if (options.persistent && e.sub_bank && *e.sub_bank < K) {
      ++sizes[*e.sub_bank];
    } else {
      e.sub_bank.reset();
      pending.push_back(id);
    }
  }
  rng.shuffle(pending);

  // Sub-bank m may hold n_b / K entries, plus one for the first n_b % K.
  std::vector<std::size_t> capacity(K);
  for (std::size_t m = 0; m < K; ++m) {
    const std::size_t target = out.size() / K + (m < out.size() % K ? 1 : 0);
    capacity[m] = target > sizes[m] ? target - sizes[m] : 0;
  }
  auto any_open = [&] {
    return std::any_of(capacity.begin(), capacity.end(), [](auto c) { return c > 0; });
  };

  if (options.mode == SplitMode::uniform && !options.persistent) {
    for (std::size_t i = 0; i < pending.size(); ++i) out.entries.at(pending[i]).sub_bank = i % K;
    return out;
  }

  std::vector<double> weight(K);
  for (auto id : pending) {
    auto& entry = out.entries.at(id);
    const bool open = any_open();
    if (options.mode == SplitMode::uniform) {
      for (std::size_t m = 0; m < K; ++m) weight[m] = 1.0;
    } else {
      const double off = K > 1 ? (1.0 - options.skew) / static_cast<double>(K - 1) : 1.0;
      for (std::size_t m = 0; m < K; ++m) weight[m] = m == entry.pseudo_label % K ? options.skew : off;
    }
    double total = 0.0;
    for (std::size_t m = 0; m < K; ++m) {
      if (open && capacity[m] == 0) weight[m] = 0.0;
      total += weight[m];
    }
    if (total <= 0.0) {  // preferred sub-banks full and the rest weighted 0
      for (std::size_t m = 0; m < K; ++m) weight[m] = (!open || capacity[m] > 0) ? 1.0 : 0.0;
      total = std::accumulate(weight.begin(), weight.end(), 0.0);
    }
    double draw = rng.uniform() * total;
    std::size_t pick = K - 1;
    for (std::size_t m = 0; m < K; ++m) {
      if (weight[m] <= 0.0) continue;
      pick = m;
      if (draw < weight[m]) break;
      draw -= weight[m];
    }
    entry.sub_bank = pick;
    if (capacity[pick] > 0) --capacity[pick];
  }
  return out;
}

inline constexpr double kPriorFloor = 1e-6;

/// Sub-bank class priors `Pi` (rows = sub-banks), sub-bank shares `pi_bar`
/// and the marginal class prior `pi = pi_bar^T Pi` (floored for division).
struct PriorSet {
  Matrix Pi;
  Vector pi_bar;
  Vector pi;
  /// pi before flooring; equals the whole-bank pseudo-label histogram.
  Vector pi_raw;
  /// Set when any class fell below the floor.
  bool degenerate = false;

  std::size_t num_classes() const noexcept { return pi.size(); }
};

inline Vector floor_and_normalize(Vector v, double floor, bool* touched = nullptr) {
  bool hit = false;
  for (double& x : v) {
    if (x < floor) {
      x = floor;
      hit = true;
    }
  }
  if (hit) {
    double total = 0.0;
    for (double x : v) total += x;
    for (double& x : v) x /= total;
  }
  if (touched) *touched = hit;
  return v;
}

inline PriorSet estimate_priors(const DynamicBank& bank, std::size_t num_classes) {
  require(!bank.empty(), ErrorKind::invalid_state, "cannot estimate priors from an empty bank");
  std::vector<std::vector<std::size_t>> counts(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::vector<std::size_t> sizes(num_classes, 0);
  for (const auto& [id, e] : bank.entries) {
    require(e.sub_bank.has_value(), ErrorKind::invalid_state,
            "sample " + std::to_string(id) + " has no sub-bank");
    require(*e.sub_bank < num_classes && e.pseudo_label < num_classes, ErrorKind::invalid_state,
            "sub-bank or pseudo-label out of range");
    ++counts[*e.sub_bank][e.pseudo_label];
    ++sizes[*e.sub_bank];
  }
  PriorSet ps;
  ps.Pi = Matrix(num_classes, num_classes);
  ps.pi_bar.assign(num_classes, 0.0);
  ps.pi_raw.assign(num_classes, 0.0);
  const auto n_b = static_cast<double>(bank.size());
  for (std::size_t m = 0; m < num_classes; ++m) {
    require(sizes[m] > 0, ErrorKind::invalid_state, "sub-bank " + std::to_string(m) + " is empty");
    const auto n_m = static_cast<double>(sizes[m]);
    for (std::size_t k = 0; k < num_classes; ++k)
      ps.Pi(m, k) = static_cast<double>(counts[m][k]) / n_m;
    ps.pi_bar[m] = n_m / n_b;
  }
  for (std::size_t m = 0; m < num_classes; ++m)
    for (std::size_t k = 0; k < num_classes; ++k) ps.pi_raw[k] += ps.pi_bar[m] * ps.Pi(m, k);
  ps.pi = floor_and_normalize(ps.pi_raw, kPriorFloor, &ps.degenerate);
  return ps;
}

inline double coverage(const DynamicBank& bank, std::size_t client_size) {
  require(client_size >= 1, ErrorKind::invalid_input, "client_size must be >= 1");
  return static_cast<double>(bank.size()) / static_cast<double>(client_size);
}

}  // namespace imfed
