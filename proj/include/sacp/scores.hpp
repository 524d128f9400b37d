#pragma once

#include <span>
#include <vector>

#include "sacp/core.hpp"

namespace sacp {

/// Regression nonconformity score |label - prediction|.
double abs_residual(double prediction, double label);

/// Classification score 1 - probs[label], clamped to [0, 1].
/// label is a 0-based class index; probs must sum to 1 within 1e-6.
double one_minus_prob(std::span<const double> probs, std::size_t label);

/// Assembles the calibration score grid for regression.
/// predictions is n x K (column per model); entry (i,k) = |y_i - mu_k(x_i)|.
ScoreMatrix build_calibration_scores(const Matrix& predictions,
                                     std::span<const double> labels);

/// Classification counterpart: probs_per_model holds K matrices of shape
/// n x C (row-stochastic); entry (i,k) = 1 - p_k(label_i | x_i).
ScoreMatrix build_calibration_scores(const std::vector<Matrix>& probs_per_model,
                                     std::span<const std::size_t> labels);

/// Throws contract_error unless every row of probs sums to 1 within tol and
/// all entries lie in [0, 1].
void validate_row_stochastic(const Matrix& probs, double tol = 1e-6);

}  // namespace sacp
