#include "sacp/scores.hpp"

#include <algorithm>
#include <cmath>

namespace sacp {

double abs_residual(double prediction, double label) {
  if (!std::isfinite(prediction) || !std::isfinite(label))
    throw contract_error("abs_residual needs finite inputs");
  return std::abs(label - prediction);
}

double one_minus_prob(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw contract_error("class label out of range");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-9) || !(p <= 1.0 + 1e-9))
      throw contract_error("class probabilities must lie in [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw contract_error("class probabilities must sum to 1");
  return std::clamp(1.0 - probs[label], 0.0, 1.0);
}

ScoreMatrix build_calibration_scores(const Matrix& predictions,
                                     std::span<const double> labels) {
  if (predictions.rows != labels.size())
    throw contract_error("prediction rows and label count differ");
  Matrix scores(predictions.rows, predictions.cols);
  for (std::size_t i = 0; i < predictions.rows; ++i)
    for (std::size_t k = 0; k < predictions.cols; ++k)
      scores(i, k) = abs_residual(predictions(i, k), labels[i]);
  return ScoreMatrix(std::move(scores));
}

ScoreMatrix build_calibration_scores(const std::vector<Matrix>& probs_per_model,
                                     std::span<const std::size_t> labels) {
  if (probs_per_model.empty())
    throw contract_error("need at least one model");
  const std::size_t n = probs_per_model.front().rows;
  Matrix scores(n, probs_per_model.size());
  for (std::size_t k = 0; k < probs_per_model.size(); ++k) {
    const Matrix& probs = probs_per_model[k];
    if (probs.rows != n || probs.rows != labels.size())
      throw contract_error("model outputs and labels are misaligned");
    for (std::size_t i = 0; i < n; ++i)
      scores(i, k) = one_minus_prob(probs.row(i), labels[i]);
  }
  return ScoreMatrix(std::move(scores));
}

void validate_row_stochastic(const Matrix& probs, double tol) {
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) {
      double p = probs(i, c);
      if (!(p >= -tol) || !(p <= 1.0 + tol))
        throw contract_error("probability outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
      throw contract_error("probability row does not sum to 1");
  }
}

}  // namespace sacp
