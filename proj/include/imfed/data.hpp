#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imfed/numerics.hpp"

namespace imfed {

using SampleId = std::uint64_t;

/// Feature matrix with optional labels. `ids` survive subsetting so a sample
/// can be traced from the pool to whichever shard it ends up in.
struct Dataset {
  Matrix features;
  std::optional<std::vector<std::size_t>> labels;
  std::size_t num_classes = 0;
  std::vector<SampleId> ids;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool labeled() const noexcept { return labels.has_value(); }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.select_rows(rows);
    out.num_classes = num_classes;
    out.ids.reserve(rows.size());
    for (auto r : rows) out.ids.push_back(ids[r]);
    if (labels) {
      std::vector<std::size_t> l;
      l.reserve(rows.size());
      for (auto r : rows) l.push_back((*labels)[r]);
      out.labels = std::move(l);
    }
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    if (labels)
      for (auto y : *labels) ++counts[y];
    return counts;
  }
};

/// Training-facing view of a client's shard: features and ids only. Ground
/// truth is kept for evaluation and for the supervised upper-bound run, and is
/// reachable solely through `oracle_labels()`.
class ClientShard {
 public:
  ClientShard() = default;
  explicit ClientShard(Dataset data) : data_(std::move(data)) {}

  const Matrix& features() const noexcept { return data_.features; }
  const std::vector<SampleId>& ids() const noexcept { return data_.ids; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t num_classes() const noexcept { return data_.num_classes; }

  const std::vector<std::size_t>& oracle_labels() const {
    require(data_.labels.has_value(), ErrorKind::invalid_state, "client shard has no oracle labels");
    return *data_.labels;
  }

 private:
  Dataset data_;
};

struct PartitionSpec {
  std::size_t num_clients = 10;
  double gamma = 1.5;
  double proportion_lo = 0.05;
  double proportion_hi = 0.5;
  std::size_t server_per_class = 15;
  std::size_t max_resample_attempts = 1000;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;

  void validate() const {
    require(num_clients >= 1, ErrorKind::invalid_input, "num_clients must be >= 1");
    require(gamma > 0.0, ErrorKind::invalid_input, "gamma must be > 0");
    require(proportion_lo >= 0.0 && proportion_lo < proportion_hi && proportion_hi <= 1.0,
            ErrorKind::invalid_input, "proportion bounds must satisfy 0 <= lo < hi <= 1");
    require(proportion_lo * static_cast<double>(num_clients) <= 1.0 + 1e-12,
            ErrorKind::invalid_input, "proportion lower bound times num_clients exceeds 1");
    require(max_resample_attempts >= 1, ErrorKind::invalid_input,
            "max_resample_attempts must be >= 1");
    require(validation_fraction >= 0.0 && test_fraction >= 0.0 &&
                validation_fraction + test_fraction < 1.0,
            ErrorKind::invalid_input, "validation/test fractions must be >= 0 and sum below 1");
  }
};

struct FederationData {
  Dataset server_labeled;
  std::vector<ClientShard> clients;
  /// C x K realized class distribution of each client shard.
  Matrix true_client_priors;
  /// K x C proportions drawn from the Dirichlet for each class.
  Matrix class_allocation;
  Dataset validation;
  Dataset test;

  std::size_t num_classes() const noexcept { return server_labeled.num_classes; }
};

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Class centers at distance `separation` from the origin. With K <= d they
/// sit on a regular simplex (all pairwise distances equal); otherwise they are
/// spread evenly on a circle in the first two coordinates.
inline Matrix class_centers(std::size_t num_classes, std::size_t dim, double separation) {
  Matrix centers(num_classes, dim);
  const double k = static_cast<double>(num_classes);
  if (num_classes <= dim) {
    const double norm = std::sqrt((k - 1.0) / k);
    for (std::size_t c = 0; c < num_classes; ++c)
      for (std::size_t j = 0; j < num_classes; ++j)
        centers(c, j) = separation * ((c == j ? 1.0 : 0.0) - 1.0 / k) / norm;
  } else {
    for (std::size_t c = 0; c < num_classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / k;
      centers(c, 0) = separation * std::cos(angle);
      centers(c, 1) = separation * std::sin(angle);
    }
  }
  return centers;
}

inline Dataset generate_gaussian_mixture(std::size_t num_classes, std::size_t dim,
                                         const std::vector<std::size_t>& per_class_counts,
                                         double separation, RngStream& rng) {
  require(num_classes >= 2, ErrorKind::invalid_input, "need at least 2 classes");
  require(dim >= 2, ErrorKind::invalid_input, "need at least 2 feature dimensions");
  require(separation > 0.0, ErrorKind::invalid_input, "separation must be > 0");
  require(per_class_counts.size() == num_classes, ErrorKind::invalid_input,
          "per_class_counts length must equal num_classes");
  for (std::size_t k = 0; k < num_classes; ++k)
    require(per_class_counts[k] > 0, ErrorKind::invalid_input,
            "class " + std::to_string(k) + " has zero samples");

  const Matrix centers = class_centers(num_classes, dim, separation);
  const std::size_t n = std::accumulate(per_class_counts.begin(), per_class_counts.end(),
                                        std::size_t{0});
  Dataset out;
  out.num_classes = num_classes;
  out.features = Matrix(n, dim);
  out.labels = std::vector<std::size_t>(n);
  out.ids.resize(n);
  std::size_t row = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < per_class_counts[k]; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) out.features(row, j) = centers(k, j) + rng.normal();
      (*out.labels)[row] = k;
      out.ids[row] = row;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace detail

/// Header row required. `label_column` empty means unlabeled.
inline Dataset load_csv(const std::string& path, const std::string& label_column = "") {
  std::ifstream in(path);
  require(in.good(), ErrorKind::load_error, "cannot open '" + path + "'");

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::load_error,
          "empty dataset: '" + path + "' has no header");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  std::optional<std::size_t> label_idx;
  if (!label_column.empty()) {
    auto it = std::find(header.begin(), header.end(), label_column);
    require(it != header.end(), ErrorKind::load_error,
            "label column '" + label_column + "' not in header");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }
  const std::size_t num_features = header.size() - (label_idx ? 1 : 0);
  require(num_features >= 1, ErrorKind::load_error, "no feature columns");

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::load_error,
            "row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                " cells, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      const std::string where = "row " + std::to_string(line_no) + ", column '" + header[c] + "'";
      if (label_idx && c == *label_idx) {
        long long v = 0;
        std::size_t used = 0;
        try {
          v = std::stoll(cell, &used);
        } catch (const std::exception&) {
          throw Error(ErrorKind::load_error, where + ": label '" + cell + "' is not an integer");
        }
        require(used == cell.size(), ErrorKind::load_error,
                where + ": label '" + cell + "' is not an integer");
        require(v >= 0, ErrorKind::load_error, where + ": negative label " + cell);
        labels.push_back(static_cast<std::size_t>(v));
      } else {
        double v = 0.0;
        std::size_t used = 0;
        try {
          v = std::stod(cell, &used);
        } catch (const std::exception&) {
          throw Error(ErrorKind::load_error, where + ": non-numeric value '" + cell + "'");
        }
        require(used == cell.size() && std::isfinite(v), ErrorKind::load_error,
                where + ": non-numeric value '" + cell + "'");
        values.push_back(v);
      }
    }
    ++rows;
  }
  require(rows > 0, ErrorKind::load_error, "empty dataset: '" + path + "' has no data rows");

  Dataset out;
  out.features = Matrix(rows, num_features, std::move(values));
  out.ids.resize(rows);
  std::iota(out.ids.begin(), out.ids.end(), SampleId{0});
  if (label_idx) {
    out.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    out.labels = std::move(labels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// Integer counts proportional to `weights` summing exactly to `total`
/// (largest-remainder / Hamilton apportionment, ties to the lower index).
inline std::vector<std::size_t> largest_remainder(std::span<const double> weights,
                                                  std::size_t total) {
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

/// Stratified carve of validation/test, S_k labeled server samples per class,
/// then a bounded Dirichlet split of the remaining pool across clients.
inline FederationData dirichlet_partition(const Dataset& full, const PartitionSpec& spec,
                                          RngStream& rng) {
  spec.validate();
  require(full.labeled(), ErrorKind::invalid_input, "partitioning requires labels");
  const std::size_t K = full.num_classes;
  const std::size_t C = spec.num_clients;

  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < full.size(); ++i) by_class[(*full.labels)[i]].push_back(i);

  std::vector<std::size_t> val_rows, test_rows, server_rows;
  std::vector<std::vector<std::size_t>> client_rows(C);
  Matrix allocation(K, C);

  for (std::size_t k = 0; k < K; ++k) {
    auto& rows = by_class[k];
    RngStream class_rng = rng.child(k);
    class_rng.shuffle(rows);

    const auto n = static_cast<double>(rows.size());
    const auto n_val = static_cast<std::size_t>(std::llround(n * spec.validation_fraction));
    const auto n_test = static_cast<std::size_t>(std::llround(n * spec.test_fraction));
    const std::size_t reserved = n_val + n_test + spec.server_per_class;
    require(rows.size() >= reserved + C, ErrorKind::invalid_input,
            "class " + std::to_string(k) + " has " + std::to_string(rows.size()) +
                " samples; needs at least " + std::to_string(reserved + C));

    auto it = rows.begin();
    val_rows.insert(val_rows.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    test_rows.insert(test_rows.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
    it += static_cast<std::ptrdiff_t>(n_test);
    server_rows.insert(server_rows.end(), it,
                       it + static_cast<std::ptrdiff_t>(spec.server_per_class));
    it += static_cast<std::ptrdiff_t>(spec.server_per_class);
    const std::size_t pool = static_cast<std::size_t>(rows.end() - it);

    ProbVector p;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < spec.max_resample_attempts && !accepted; ++attempt) {
      p = class_rng.dirichlet(C, spec.gamma);
      accepted = std::all_of(p.begin(), p.end(), [&](double v) {
        return v >= spec.proportion_lo && v <= spec.proportion_hi;
      });
    }
    require(accepted, ErrorKind::partition_failure,
            "class " + std::to_string(k) + ": no Dirichlet draw within [" +
                std::to_string(spec.proportion_lo) + ", " + std::to_string(spec.proportion_hi) +
                "] after " + std::to_string(spec.max_resample_attempts) + " attempts");
    for (std::size_t c = 0; c < C; ++c) allocation(k, c) = p[c];

    const auto counts = largest_remainder(p, pool);
    for (std::size_t c = 0; c < C; ++c) {
      client_rows[c].insert(client_rows[c].end(), it, it + static_cast<std::ptrdiff_t>(counts[c]));
      it += static_cast<std::ptrdiff_t>(counts[c]);
    }
  }

  FederationData out;
  out.validation = full.subset(val_rows);
  out.test = full.subset(test_rows);
  out.server_labeled = full.subset(server_rows);
  out.class_allocation = std::move(allocation);
  out.true_client_priors = Matrix(C, K);
  for (std::size_t c = 0; c < C; ++c) {
    Dataset shard = full.subset(client_rows[c]);
    const auto counts = shard.class_counts();
    for (std::size_t k = 0; k < K; ++k)
      out.true_client_priors(c, k) =
          shard.size() ? static_cast<double>(counts[k]) / static_cast<double>(shard.size()) : 0.0;
    out.clients.emplace_back(std::move(shard));
  }
  return out;
}

}  // namespace imfed
