#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "imfed/bank.hpp"
#include "imfed/classifier.hpp"
#include "imfed/data.hpp"
#include "imfed/numerics.hpp"

namespace imfed {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// [truth][predicted] counts.
inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions,
                                       std::span<const std::size_t> truth, std::size_t num_classes) {
  require(predictions.size() == truth.size(), ErrorKind::invalid_input,
          "predictions/truth length mismatch");
  ConfusionMatrix cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] < num_classes && predictions[i] < num_classes, ErrorKind::invalid_input,
            "class index out of range");
    ++cm[truth[i]][predictions[i]];
  }
  return cm;
}

/// One-vs-rest AUC of class `positive_class` from a single score column via
/// midranks (ties count 1/2).
inline double binary_auc(std::span<const double> scores, std::span<const std::size_t> truth,
                         std::size_t positive_class) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j+1 share the midrank
    const double midrank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t t = i; t <= j; ++t) {
      if (truth[order[t]] == positive_class) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct AucResult {
  double value = 0.0;
  /// Classes absent from the truth vector, left out of the macro mean.
  std::vector<std::size_t> excluded;
};

inline AucResult macro_auc_detailed(const Matrix& scores, std::span<const std::size_t> truth) {
  require(scores.rows() == truth.size(), ErrorKind::invalid_input, "scores/truth length mismatch");
  const std::size_t k = scores.cols();
  std::vector<std::size_t> counts(k, 0);
  for (auto y : truth) {
    require(y < k, ErrorKind::invalid_input, "class index out of range");
    ++counts[y];
  }
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  require(present >= 2, ErrorKind::undefined_metric, "AUC needs at least two classes in truth");

  AucResult r;
  double acc = 0.0;
  std::vector<double> column(truth.size());
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      r.excluded.push_back(c);
      continue;
    }
    for (std::size_t i = 0; i < truth.size(); ++i) column[i] = scores(i, c);
    acc += binary_auc(column, truth, c);
  }
  r.value = acc / static_cast<double>(k - r.excluded.size());
  return r;
}

inline double macro_auc(const Matrix& scores, std::span<const std::size_t> truth) {
  return macro_auc_detailed(scores, truth).value;
}

struct MacroRates {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  /// Classes where some rate had a zero denominator and contributed 0.
  std::vector<std::size_t> flagged;
};

inline MacroRates macro_rates(const ConfusionMatrix& cm) {
  const std::size_t k = cm.size();
  require(k >= 2, ErrorKind::invalid_input, "macro rates need K >= 2");
  std::size_t total = 0;
  for (const auto& row : cm) total += std::accumulate(row.begin(), row.end(), std::size_t{0});

  MacroRates r;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm[c][c]);
    double fn = 0.0;
    double fp = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      fn += static_cast<double>(cm[c][j]);
      fp += static_cast<double>(cm[j][c]);
    }
    const double tn = static_cast<double>(total) - tp - fn - fp;
    bool flag = false;
    auto ratio = [&](double num, double den) {
      if (den == 0.0) {
        flag = true;
        return 0.0;
      }
      return num / den;
    };
    r.sensitivity += ratio(tp, tp + fn);
    r.specificity += ratio(tn, tn + fp);
    r.f1 += ratio(2.0 * tp, 2.0 * tp + fp + fn);
    if (flag) r.flagged.push_back(c);
  }
  const auto kk = static_cast<double>(k);
  r.sensitivity /= kk;
  r.specificity /= kk;
  r.f1 /= kk;
  return r;
}

struct MetricReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double specificity = 0.0;
  double sensitivity = 0.0;
  double f1 = 0.0;
  std::vector<std::size_t> support;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport metric_report(const Matrix& scores, std::span<const std::size_t> truth) {
  require(scores.rows() == truth.size() && !truth.empty(), ErrorKind::invalid_input,
          "need a non-empty scored set");
  const std::size_t k = scores.cols();
  std::vector<std::size_t> predicted(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) predicted[i] = argmax(scores.row(i));
  const auto cm = confusion_matrix(predicted, truth, k);
  MetricReport r;
  std::size_t correct = 0;
  r.support.assign(k, 0);
  for (std::size_t c = 0; c < k; ++c) {
    correct += cm[c][c];
    r.support[c] = std::accumulate(cm[c].begin(), cm[c].end(), std::size_t{0});
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  const auto rates = macro_rates(cm);
  r.sensitivity = rates.sensitivity;
  r.specificity = rates.specificity;
  r.f1 = rates.f1;
  r.auc = macro_auc(scores, truth);
  return r;
}

inline MetricReport evaluate(const ModelParams& params, const Dataset& data) {
  require(data.labeled(), ErrorKind::invalid_input, "evaluation needs labels");
  return metric_report(forward_batch(params, data.features), *data.labels);
}

/// Frobenius distance between the estimated class prior and the client's
/// true class proportions, both viewed as 1 x K.
inline double prior_error(const PriorSet& estimated, std::span<const double> true_prior) {
  require(estimated.pi.size() == true_prior.size(), ErrorKind::invalid_input,
          "prior length mismatch");
  const Matrix a(1, estimated.pi.size(), estimated.pi);
  const Matrix b(1, true_prior.size(), Vector(true_prior.begin(), true_prior.end()));
  return frobenius_distance(a, b);
}

}  // namespace imfed
