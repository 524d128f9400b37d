#include "sacp/core.hpp"

#include <algorithm>

namespace sacp {

namespace {

// floor(alpha * n1) with a guard for the case where alpha * n1 is an integer
// in exact arithmetic but lands an ulp away in doubles (e.g. 0.2 * 5).
std::size_t floor_alpha_product(double alpha, std::size_t n1) {
  double a = alpha * static_cast<double>(n1);
  double r = std::round(a);
  if (std::abs(a - r) < 1e-9) a = r;
  double f = std::floor(a);
  return f <= 0.0 ? 0 : static_cast<std::size_t>(f);
}

}  // namespace

ScoreMatrix::ScoreMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows < 1 || entries_.cols < 1)
    throw contract_error("score matrix needs at least one row and one column");
  if (entries_.data.size() != entries_.rows * entries_.cols)
    throw contract_error("score matrix storage does not match its shape");
  for (double& v : entries_.data) {
    if (!std::isfinite(v) || v < 0.0)
      throw contract_error("nonconformity scores must be finite and nonnegative");
    if (v < score_floor) v = score_floor;
  }
  column_sums_.assign(entries_.cols, 0.0);
  for (std::size_t i = 0; i < entries_.rows; ++i)
    for (std::size_t k = 0; k < entries_.cols; ++k)
      column_sums_[k] += entries_(i, k);
}

std::vector<double> ScoreMatrix::column(std::size_t k) const {
  if (k >= entries_.cols) throw contract_error("column index out of range");
  std::vector<double> out(entries_.rows);
  for (std::size_t i = 0; i < entries_.rows; ++i) out[i] = entries_(i, k);
  return out;
}

TestScoreProfile::TestScoreProfile(std::vector<double> scores)
    : scores_(std::move(scores)) {
  if (scores_.empty()) throw contract_error("test score profile is empty");
  for (double& v : scores_) {
    if (!std::isfinite(v) || v < 0.0)
      throw contract_error("nonconformity scores must be finite and nonnegative");
    if (v < score_floor) v = score_floor;
  }
}

std::optional<std::size_t> upper_quantile_index(std::size_t n, Alpha alpha) {
  if (n < 1) throw contract_error("sample size must be positive");
  // ceil((1-a)(n+1)) == (n+1) - floor(a(n+1)); the right-hand side is the
  // numerically stable form and keeps the two indices consistent.
  std::size_t k = n + 1 - floor_alpha_product(alpha.value(), n + 1);
  if (k > n) return std::nullopt;
  return k;
}

std::optional<std::size_t> lower_quantile_index(std::size_t n, Alpha alpha) {
  if (n < 1) throw contract_error("sample size must be positive");
  std::size_t l = floor_alpha_product(alpha.value(), n + 1);
  if (l < 1) return std::nullopt;
  return l;
}

double order_statistic(std::span<const double> values, std::size_t rank) {
  if (rank < 1 || rank > values.size())
    throw contract_error("order statistic rank out of range");
  std::vector<double> scratch(values.begin(), values.end());
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(scratch.begin(), nth, scratch.end());
  return *nth;
}

}  // namespace sacp
