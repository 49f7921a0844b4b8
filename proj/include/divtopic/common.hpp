#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace divtopic {

/// Raised when input data (files, corpora, model tables) violates its format
/// or invariants. Precondition violations by the caller use std::invalid_argument.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix with value semantics.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = Matrix<double>;
using CountMatrix = Matrix<std::int64_t>;

/// All randomized code paths draw from this engine; the helpers below avoid the
/// implementation-defined std:: distributions so runs are reproducible across
/// standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

/// Samples an index proportionally to non-negative weights whose sum is `total`.
inline std::size_t sample_discrete(std::span<const double> weights, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last_positive = k;
    if (u < acc) return k;
  }
  return last_positive;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// log of a Gamma(shape, 1) draw (Marsaglia-Tsang, with the shape-boosting
/// trick for shape < 1 done in log space so tiny shapes do not underflow).
inline double log_gamma_draw(double shape, Rng& rng) {
  if (shape <= 0.0) throw std::invalid_argument("gamma shape must be positive");
  double boost_log = 0.0;
  if (shape < 1.0) {
    const double u = 1.0 - uniform01(rng);
    boost_log = std::log(u) / shape;
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d * v) + boost_log;
    }
  }
}

/// Draw from Dirichlet(concentration) into `out`.
inline void dirichlet_draw(std::span<const double> concentration, Rng& rng, std::span<double> out) {
  double max_log = -INFINITY;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[k] = log_gamma_draw(concentration[k], rng);
    max_log = std::max(max_log, out[k]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (double& v : out) v /= total;
}

/// One row of a training trace.
struct TracePoint {
  std::size_t iteration = 0;
  double likelihood = 0.0;
  std::size_t active_count = 0;
};

inline double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// Normalizes in place; returns the pre-normalization sum (left untouched if zero).
inline double normalize(std::span<double> v) {
  const double total = sum(v);
  if (total > 0.0) {
    for (double& x : v) x /= total;
  }
  return total;
}

}  // namespace divtopic
