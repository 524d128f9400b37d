#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sacp {

// A documented precondition was violated by the caller.
class contract_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A run configuration is invalid (CLI exit code 2).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data could not be parsed or validated (CLI exit code 3).
class ingest_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { regression, classification };

// Scores below this floor are lifted to it, so e-value denominators stay
// positive and negative powers stay finite.
inline constexpr double score_floor = 1e-12;

/// Miscoverage level, restricted to the open interval (0, 1).
class Alpha {
 public:
  explicit Alpha(double value) : value_(value) {
    if (!(value > 0.0) || !(value < 1.0) || !std::isfinite(value))
      throw contract_error("alpha must lie in (0, 1)");
  }
  double value() const { return value_; }

 private:
  double value_;
};

/// Dense row-major matrix of doubles. Deliberately minimal.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data.data() + i * cols, cols);
  }
};

/// n x K grid of calibration nonconformity scores, one column per base model.
/// Entries are validated nonnegative and lifted to score_floor on construction;
/// per-column sums are cached because every e-value denominator needs them.
class ScoreMatrix {
 public:
  explicit ScoreMatrix(Matrix entries);

  std::size_t rows() const { return entries_.rows; }
  std::size_t cols() const { return entries_.cols; }
  double operator()(std::size_t i, std::size_t k) const { return entries_(i, k); }
  double column_sum(std::size_t k) const { return column_sums_[k]; }
  std::span<const double> column_sums() const { return column_sums_; }
  const Matrix& entries() const { return entries_; }

  /// Copy of column k (handy for the per-model baselines).
  std::vector<double> column(std::size_t k) const;

 private:
  Matrix entries_;
  std::vector<double> column_sums_;
};

/// K-vector of test nonconformity scores for one candidate label.
class TestScoreProfile {
 public:
  explicit TestScoreProfile(std::vector<double> scores);

  std::size_t size() const { return scores_.size(); }
  double operator[](std::size_t k) const { return scores_[k]; }
  std::span<const double> scores() const { return scores_; }

 private:
  std::vector<double> scores_;
};

/// Rank of the upper conformal quantile: ceil((1-alpha)(n+1)), or nullopt when
/// the rank exceeds n (the quantile is +inf and every candidate is accepted).
std::optional<std::size_t> upper_quantile_index(std::size_t n, Alpha alpha);

/// Rank of the lower conformal quantile: floor(alpha(n+1)), or nullopt when the
/// rank falls below 1 (the threshold is -inf; accept everything).
std::optional<std::size_t> lower_quantile_index(std::size_t n, Alpha alpha);

/// rank-th smallest value, 1-based, duplicates counted with multiplicity.
/// Uses selection rather than a full sort.
double order_statistic(std::span<const double> values, std::size_t rank);

}  // namespace sacp
