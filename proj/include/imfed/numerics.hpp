#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace imfed {

enum class ErrorKind {
  invalid_input,
  oracle_failure,
  load_error,
  partition_failure,
  insufficient_bank,
  invalid_state,
  invalid_prior,
  undefined_metric,
  invalid_setup,
  protocol_error,
  config_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::oracle_failure: return "oracle-failure";
    case ErrorKind::load_error: return "load-error";
    case ErrorKind::partition_failure: return "partition-failure";
    case ErrorKind::insufficient_bank: return "insufficient-bank";
    case ErrorKind::invalid_state: return "invalid-state";
    case ErrorKind::invalid_prior: return "invalid-prior";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::invalid_setup: return "invalid-setup";
    case ErrorKind::protocol_error: return "protocol-error";
    case ErrorKind::config_error: return "config-error";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was broken.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

using Vector = std::vector<double>;
/// Entries non-negative, summing to one.
using ProbVector = std::vector<double>;

inline constexpr double kLogClamp = 1e-12;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::invalid_input,
            "matrix data length does not match rows x cols");
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].size() == m.cols_, ErrorKind::invalid_input, "ragged matrix rows");
      std::copy(rows[i].begin(), rows[i].end(), m.row_ptr(i));
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {row_ptr(r), cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = row(indices[i]);
      std::copy(src.begin(), src.end(), out.row_ptr(i));
    }
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool is_prob_vector(std::span<const double> p, double tol = 1e-9) {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Stable softmax: shifts by the max logit so |z| up to ~1e3 neither
/// overflows nor produces NaN.
inline ProbVector softmax(std::span<const double> logits) {
  require(!logits.empty(), ErrorKind::invalid_input, "softmax of empty vector");
  double top = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    require(std::isfinite(z), ErrorKind::invalid_input, "softmax input not finite");
    top = std::max(top, z);
  }
  ProbVector p(logits.size());
  double denom = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - top);
    denom += p[k];
  }
  for (double& v : p) v /= denom;
  return p;
}

inline double cross_entropy(std::span<const double> p, std::size_t label) {
  require(label < p.size(), ErrorKind::invalid_input,
          "label " + std::to_string(label) + " out of range for " + std::to_string(p.size()) +
              " classes");
  return -std::log(std::max(p[label], kLogClamp));
}

/// Central-difference gradient. Used as the reference oracle in tests, so it
/// stays deliberately naive.
inline Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, double h = 1e-5) {
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    require(std::isfinite(up) && std::isfinite(down), ErrorKind::oracle_failure,
            "objective not finite at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::invalid_input,
          "frobenius_distance shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL);
  splitmix64(s);
  return splitmix64(s);
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// xoshiro256** keyed by (seed, stream id). Child streams are derived from the
/// key, never from the current position, so a client's randomness does not
/// depend on how many draws other clients made or in which order they ran.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t sm = detail::mix64(seed, stream_id);
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  RngStream child(std::uint64_t tag) const {
    return RngStream(seed_, detail::mix64(stream_id_ ^ 0xA0761D6478BD642FULL, tag));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, ErrorKind::invalid_input, "below(0)");
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Marsaglia–Tsang; shape < 1 handled by the usual U^(1/shape) boost.
  double gamma(double shape) {
    require(shape > 0.0, ErrorKind::invalid_input, "gamma shape must be positive");
    if (shape < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  ProbVector dirichlet(std::size_t n, double concentration) {
    ProbVector p(n);
    double sum = 0.0;
    for (double& v : p) {
      v = gamma(concentration);
      sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4]{};
};

}  // namespace imfed
