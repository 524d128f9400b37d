#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "sacp/core.hpp"

namespace sacp::validate {

/// Machine-readable outcome of one theory check. A failed check is treated as
/// a hard test failure by the CLI and the test suites.
struct Report {
  std::string check;
  nlohmann::json params;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double statistic = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

/// Rank of the aggregated test score among the n+1 aggregated scores must be
/// uniform when calibration and test draws are exchangeable. Chi-square test
/// at significance 0.001. With negative_control the test scores are drawn from
/// a shifted distribution and the check is expected to fail.
Report check_rank_uniformity(std::size_t n, std::size_t trials,
                             std::uint64_t seed, std::size_t k_models = 3,
                             bool negative_control = false);

/// Empirical quantile subadditivity: the row-sum quantile at level alpha never
/// exceeds the sum of per-column quantiles at level alpha/K.
Report check_quantile_lemma(std::size_t trials, std::size_t n, std::size_t K,
                            Alpha alpha, std::uint64_t seed);

/// Worst-case regression set length: |C| <= model disagreement plus the widest
/// per-model interval at level alpha/K, plus two grid steps of slack.
Report check_worst_case_bound(std::size_t trials, std::size_t n, std::size_t K,
                              Alpha alpha, std::size_t grid_size,
                              std::uint64_t seed);

/// Monotone reparameterizations of the aggregated scores never change the
/// membership decision (log for increasing maps; negation plus the flipped
/// comparison side for decreasing ones).
Report check_rho_invariance(std::size_t trials, std::uint64_t seed);

}  // namespace sacp::validate
