#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sacp/aggregate.hpp"
#include "sacp/core.hpp"

namespace sacp {

/// Uniform grid over the target space used to discretize regression sets.
class TargetGrid {
 public:
  static TargetGrid uniform(double lo, double hi, std::size_t count);

  /// Grid spanning [min(targets), max(targets)].
  static TargetGrid from_targets(std::span<const double> targets,
                                 std::size_t count);

  std::size_t size() const { return points_.size(); }
  double point(std::size_t i) const { return points_[i]; }
  double step() const { return step_; }
  std::span<const double> points() const { return points_; }

 private:
  TargetGrid(std::vector<double> points, double step)
      : points_(std::move(points)), step_(step) {}
  std::vector<double> points_;
  double step_;
};

struct PredictionSetClassification {
  std::vector<std::size_t> accepted;  // sorted 0-based class indices

  bool contains(std::size_t c) const;
};

struct PredictionSetRegression {
  std::vector<bool> mask;  // one flag per grid point
  double length = 0.0;     // accepted count times grid step
};

/// Per-candidate membership engine for regression with absolute-residual
/// scores. Precomputes everything that depends only on (calib, spec, alpha) so
/// sweeping a grid or a test set costs O(nK) per candidate label. Grid masks
/// exploit that the decision is monotone outside the span of the K model
/// predictions, so each tail is located by bisection.
class RegressionSetEvaluator {
 public:
  RegressionSetEvaluator(const ScoreMatrix& calib, const AggregatorSpec& spec,
                         Alpha alpha);

  /// predictions: the K per-model point predictions at one test input.
  bool member(std::span<const double> predictions, double y) const;

  PredictionSetRegression set_on_grid(std::span<const double> predictions,
                                      const TargetGrid& grid) const;

  std::size_t models() const { return K_; }

 private:
  bool decide(std::span<const double> test_scores) const;

  AggregatorSpec spec_;
  std::size_t n_ = 0;
  std::size_t K_ = 0;
  bool accept_all_ = false;
  bool upper_ = true;
  std::size_t count_limit_ = 0;      // max strict wins for acceptance
  std::vector<double> phi_cal_;      // n x K, phi-transformed calibration scores
  std::vector<double> column_sums_;  // raw per-model score sums
};

/// SACP classification set: one e-value block and one conformal quantile per
/// candidate class.
PredictionSetClassification sacp_classify(
    const ScoreMatrix& calib, const std::vector<TestScoreProfile>& class_profiles,
    const AggregatorSpec& spec, Alpha alpha);

/// SACP regression set over a target grid, scores |y - mu_k(x_test)|.
PredictionSetRegression sacp_regress(const ScoreMatrix& calib,
                                     std::span<const double> predictions,
                                     const TargetGrid& grid,
                                     const AggregatorSpec& spec, Alpha alpha);

/// Membership evaluated at the exact candidate value (no grid); this is what
/// coverage statistics are computed from.
bool sacp_membership_exact(const ScoreMatrix& calib,
                           std::span<const double> predictions, double y_true,
                           const AggregatorSpec& spec, Alpha alpha);

struct PSearchOutcome {
  AggregatorSpec chosen;
  std::size_t chosen_index = 0;
  std::vector<double> average_lengths;  // one entry per candidate
};

/// Picks the aggregator with the smallest average set length over the
/// (unlabeled) test inputs. Candidates must include the plain sum. Ties break
/// toward exponent closest to 1, then smaller |p|, then min before max.
PSearchOutcome select_p(const ScoreMatrix& calib, const Matrix& test_predictions,
                        const TargetGrid& grid,
                        std::span<const AggregatorSpec> candidates, Alpha alpha,
                        unsigned threads = 1);

PSearchOutcome select_p(
    const ScoreMatrix& calib,
    const std::vector<std::vector<TestScoreProfile>>& test_class_profiles,
    std::span<const AggregatorSpec> candidates, Alpha alpha,
    unsigned threads = 1);

/// Default search pool: 61 evenly spaced exponents ([-15,15] for regression,
/// [-8,8] for classification), the degenerate band |p| < 1e-6 dropped, the
/// plain sum guaranteed, plus min and max as the limit aggregators.
std::vector<AggregatorSpec> default_power_grid(Task task);

}  // namespace sacp
