#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacp/core.hpp"

namespace sacp::baselines {

/// Plain split conformal membership for one model: accept when the test score
/// does not exceed the calibration quantile (accept-all on rank overflow).
bool split_cp_single(std::span<const double> calib_col, double test_score,
                     Alpha alpha);

/// Best-model selection for regression: the model with the smallest
/// calibration quantile (interval length proxy 2 * quantile). Ties go to the
/// smallest index.
std::size_t bl_select(const ScoreMatrix& calib, Alpha alpha);

/// Classification counterpart: smallest average per-class set size on the
/// calibration set. cal_class_scores holds one n x C score matrix per model.
std::size_t bl_select(const ScoreMatrix& calib,
                      const std::vector<Matrix>& cal_class_scores, Alpha alpha);

using CandidateMask = std::vector<bool>;

/// Deterministic 50/50 row split used by the two-stage baselines (wagg, csa):
/// a seeded shuffle of 0..n-1, first half for selection, second half for the
/// conformal threshold. Requires n >= 4.
struct CalibrationSplit {
  std::vector<std::size_t> half1, half2;
};
CalibrationSplit calibration_split(std::size_t n, std::uint64_t seed);

/// Majority vote: keep candidates accepted by more than half of the models.
CandidateMask cm_merge(const std::vector<CandidateMask>& sets);

/// Randomized majority vote with threshold (1 + u) / 2, u in [0, 1).
CandidateMask cr_merge(const std::vector<CandidateMask>& sets, double u);

CandidateMask sets_union(const std::vector<CandidateMask>& sets);
CandidateMask sets_intersection(const std::vector<CandidateMask>& sets);

/// Point on the (K-1)-simplex: nonnegative weights summing to one.
struct WeightVector {
  std::vector<double> w;
};

/// Candidate pool for the weight search: the K vertices first, then a
/// Kronecker low-discrepancy fill of the simplex interior, seeded.
std::vector<WeightVector> simplex_candidates(std::size_t k_models,
                                             std::size_t count,
                                             std::uint64_t seed);

struct WaggModel {
  WeightVector weights;
  double threshold = 0.0;
  bool accept_all = false;
};

/// Weighted score aggregation. Splits the calibration rows 50/50 by seed,
/// picks the weight vector with the smallest set-length proxy on the first
/// half, then calibrates the conformal threshold on the second half only.
WaggModel wagg_fit(const ScoreMatrix& calib, Alpha alpha, std::size_t n_weights,
                   std::uint64_t seed);

/// Classification variant; the selection proxy is the average per-class set
/// size on the first half.
WaggModel wagg_fit(const ScoreMatrix& calib,
                   const std::vector<Matrix>& cal_class_scores, Alpha alpha,
                   std::size_t n_weights, std::uint64_t seed);

/// Same as wagg_fit but with an explicit candidate pool (used by tests and by
/// brute-force comparisons).
WaggModel wagg_fit_with_candidates(const ScoreMatrix& calib,
                                   const std::vector<Matrix>* cal_class_scores,
                                   Alpha alpha,
                                   std::span<const WeightVector> candidates,
                                   std::uint64_t seed);

double wagg_combine(std::span<const double> weights,
                    std::span<const double> scores);

bool wagg_membership(const WaggModel& model, std::span<const double> test_scores);

/// Conformal score aggregation via random projections: an envelope of
/// direction-wise quantiles shaped on one half of the calibration data and
/// rescaled conformally on the other half.
struct CsaModel {
  Matrix directions;               // M x K, unit rows with nonnegative entries
  std::vector<double> thresholds;  // q_m at beta*
  double beta_star = 0.0;
  double t_star = 0.0;
  bool accept_all = false;
};

CsaModel csa_fit(const ScoreMatrix& calib, Alpha alpha,
                 std::size_t m_directions, std::size_t bisect_iters,
                 std::uint64_t seed);

bool csa_membership(const CsaModel& model, const TestScoreProfile& test);

}  // namespace sacp::baselines
