#include "sacp/sacp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sacp/par.hpp"

namespace sacp {

TargetGrid TargetGrid::uniform(double lo, double hi, std::size_t count) {
  if (count < 2) throw contract_error("target grid needs at least two points");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
    throw config_error("target grid range is degenerate");
  double step = (hi - lo) / static_cast<double>(count - 1);
  std::vector<double> pts(count);
  for (std::size_t i = 0; i < count; ++i)
    pts[i] = lo + static_cast<double>(i) * step;
  pts.back() = hi;
  return TargetGrid(std::move(pts), step);
}

TargetGrid TargetGrid::from_targets(std::span<const double> targets,
                                    std::size_t count) {
  if (targets.empty()) throw contract_error("no targets to span");
  auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
  return uniform(*lo, *hi, count);
}

bool PredictionSetClassification::contains(std::size_t c) const {
  return std::binary_search(accepted.begin(), accepted.end(), c);
}

RegressionSetEvaluator::RegressionSetEvaluator(const ScoreMatrix& calib,
                                               const AggregatorSpec& spec,
                                               Alpha alpha)
    : spec_(spec), n_(calib.rows()), K_(calib.cols()) {
  column_sums_.assign(calib.column_sums().begin(), calib.column_sums().end());

  if (spec_.direction() == Direction::increasing) {
    upper_ = true;
    auto rank = upper_quantile_index(n_, alpha);
    if (!rank)
      accept_all_ = true;
    else
      count_limit_ = *rank - 1;  // accept while < rank scores beat the test
  } else {
    upper_ = false;
    auto rank = lower_quantile_index(n_, alpha);
    if (!rank)
      accept_all_ = true;
    else
      count_limit_ = n_ - *rank;
  }

  phi_cal_.resize(n_ * K_);
  const bool powered = spec_.kind() == AggKind::power;
  const double p = spec_.exponent();
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k < K_; ++k) {
      double s = calib(i, k);
      phi_cal_[i * K_ + k] = powered ? sat_pow(s, p) : s;
    }
}

// test_scores must already be clamped to the score floor. The per-model
// normalization s -> s * (n+1) / (colsum + s_test) shares one factor per
// column, so the aggregated calibration scores are linear in the precomputed
// phi table and the membership decision reduces to a rank count.
bool RegressionSetEvaluator::decide(std::span<const double> test_scores) const {
  if (accept_all_) return true;

  double wstack[16];
  std::vector<double> wheap;
  double* w = wstack;
  if (K_ > 16) {
    wheap.resize(K_);
    w = wheap.data();
  }

  const AggKind kind = spec_.kind();
  const double np1 = static_cast<double>(n_ + 1);
  for (std::size_t k = 0; k < K_; ++k)
    w[k] = np1 / (column_sums_[k] + test_scores[k]);

  double f_test = 0.0;
  switch (kind) {
    case AggKind::sum:
      for (std::size_t k = 0; k < K_; ++k) f_test += test_scores[k] * w[k];
      f_test = sat_cap(f_test);
      break;
    case AggKind::power: {
      const double p = spec_.exponent();
      for (std::size_t k = 0; k < K_; ++k) {
        w[k] = sat_pow(w[k], p);
        f_test += sat_pow(test_scores[k], p) * w[k];
      }
      f_test = sat_cap(f_test);
      break;
    }
    case AggKind::min:
      f_test = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K_; ++k)
        f_test = std::min(f_test, test_scores[k] * w[k]);
      break;
    case AggKind::max:
      f_test = 0.0;
      for (std::size_t k = 0; k < K_; ++k)
        f_test = std::max(f_test, test_scores[k] * w[k]);
      break;
  }

  std::size_t wins = 0;
  const double* a = phi_cal_.data();
  const bool extremal = kind == AggKind::min || kind == AggKind::max;
  for (std::size_t i = 0; i < n_; ++i, a += K_) {
    double f;
    if (!extremal) {
      f = 0.0;
      for (std::size_t k = 0; k < K_; ++k) f += a[k] * w[k];
      f = sat_cap(f);
    } else if (kind == AggKind::min) {
      f = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K_; ++k) f = std::min(f, a[k] * w[k]);
    } else {
      f = 0.0;  // e-values are nonnegative
      for (std::size_t k = 0; k < K_; ++k) f = std::max(f, a[k] * w[k]);
    }
    wins += upper_ ? (f < f_test) : (f > f_test);
    if (wins > count_limit_) return false;
  }
  return true;
}

bool RegressionSetEvaluator::member(std::span<const double> predictions,
                                    double y) const {
  if (predictions.size() != K_)
    throw contract_error("prediction count does not match model count");
  double sstack[16];
  std::vector<double> sheap;
  double* s = sstack;
  if (K_ > 16) {
    sheap.resize(K_);
    s = sheap.data();
  }
  for (std::size_t k = 0; k < K_; ++k)
    s[k] = std::max(std::abs(y - predictions[k]), score_floor);
  return decide(std::span<const double>(s, K_));
}

PredictionSetRegression RegressionSetEvaluator::set_on_grid(
    std::span<const double> predictions, const TargetGrid& grid) const {
  if (predictions.size() != K_)
    throw contract_error("prediction count does not match model count");
  const std::size_t G = grid.size();
  PredictionSetRegression out;
  out.mask.assign(G, false);
  if (accept_all_) {
    out.mask.assign(G, true);
    out.length = static_cast<double>(G) * grid.step();
    return out;
  }

  auto [lo_it, hi_it] = std::minmax_element(predictions.begin(), predictions.end());
  const double y0 = *lo_it, y1 = *hi_it;
  auto pts = grid.points();
  const std::size_t first_gt_y0 =
      std::upper_bound(pts.begin(), pts.end(), y0) - pts.begin();
  const std::size_t first_ge_y1 =
      std::lower_bound(pts.begin(), pts.end(), y1) - pts.begin();
  const std::size_t right_start = std::max(first_ge_y1, first_gt_y0);

  auto at = [&](std::size_t i) { return member(predictions, pts[i]); };
  std::size_t count = 0;

  // Left of every model prediction the decision flips at most once
  // (rejected -> accepted as y approaches y0), so bisect the boundary.
  if (first_gt_y0 > 0 && at(first_gt_y0 - 1)) {
    std::size_t a = 0, b = first_gt_y0 - 1;
    while (a < b) {
      std::size_t m = a + (b - a) / 2;
      if (at(m))
        b = m;
      else
        a = m + 1;
    }
    for (std::size_t i = a; i < first_gt_y0; ++i) out.mask[i] = true;
    count += first_gt_y0 - a;
  }

  // Between the extreme predictions nothing is monotone; scan directly.
  for (std::size_t i = first_gt_y0; i < right_start; ++i)
    if (at(i)) {
      out.mask[i] = true;
      ++count;
    }

  // Right tail mirrors the left one (accepted -> rejected).
  if (right_start < G && at(right_start)) {
    std::size_t a = right_start, b = G - 1;
    while (a < b) {
      std::size_t m = a + (b - a + 1) / 2;
      if (at(m))
        a = m;
      else
        b = m - 1;
    }
    for (std::size_t i = right_start; i <= a; ++i) out.mask[i] = true;
    count += a - right_start + 1;
  }

  out.length = static_cast<double>(count) * grid.step();
  return out;
}

PredictionSetClassification sacp_classify(
    const ScoreMatrix& calib, const std::vector<TestScoreProfile>& class_profiles,
    const AggregatorSpec& spec, Alpha alpha) {
  PredictionSetClassification out;
  for (std::size_t c = 0; c < class_profiles.size(); ++c) {
    EValueBlock block = normalize_to_evalues(calib, class_profiles[c]);
    AggregatedScores agg = apply_aggregator(block, spec);
    MembershipRule rule = membership_threshold(agg.f_cal, spec, alpha);
    if (rule.accepts(agg.f_test)) out.accepted.push_back(c);
  }
  return out;
}

PredictionSetRegression sacp_regress(const ScoreMatrix& calib,
                                     std::span<const double> predictions,
                                     const TargetGrid& grid,
                                     const AggregatorSpec& spec, Alpha alpha) {
  RegressionSetEvaluator eval(calib, spec, alpha);
  return eval.set_on_grid(predictions, grid);
}

bool sacp_membership_exact(const ScoreMatrix& calib,
                           std::span<const double> predictions, double y_true,
                           const AggregatorSpec& spec, Alpha alpha) {
  RegressionSetEvaluator eval(calib, spec, alpha);
  return eval.member(predictions, y_true);
}

namespace {

struct TieKey {
  double dist_to_one;
  double abs_p;
  int extremal_rank;  // min sorts before max
};

TieKey tie_key(const AggregatorSpec& spec) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (spec.kind()) {
    case AggKind::sum:
      return {0.0, 1.0, 0};
    case AggKind::power:
      return {std::abs(spec.exponent() - 1.0), std::abs(spec.exponent()), 0};
    case AggKind::min:
      return {inf, inf, 1};
    case AggKind::max:
      return {inf, inf, 2};
  }
  return {inf, inf, 3};
}

bool key_less(const TieKey& a, const TieKey& b) {
  if (a.dist_to_one != b.dist_to_one) return a.dist_to_one < b.dist_to_one;
  if (a.abs_p != b.abs_p) return a.abs_p < b.abs_p;
  return a.extremal_rank < b.extremal_rank;
}

PSearchOutcome pick_argmin(std::span<const AggregatorSpec> candidates,
                           std::vector<double> avg) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (avg[i] < avg[best] ||
        (avg[i] == avg[best] &&
         key_less(tie_key(candidates[i]), tie_key(candidates[best]))))
      best = i;
  }
  return {candidates[best], best, std::move(avg)};
}

void require_sum_candidate(std::span<const AggregatorSpec> candidates) {
  if (candidates.empty())
    throw contract_error("aggregator candidate list is empty");
  for (const auto& c : candidates)
    if (c.kind() == AggKind::sum) return;
  throw contract_error("candidate list must include the plain sum");
}

}  // namespace

PSearchOutcome select_p(const ScoreMatrix& calib, const Matrix& test_predictions,
                        const TargetGrid& grid,
                        std::span<const AggregatorSpec> candidates, Alpha alpha,
                        unsigned threads) {
  require_sum_candidate(candidates);
  if (test_predictions.cols != calib.cols())
    throw contract_error("test predictions do not match the model count");
  if (test_predictions.rows == 0)
    throw contract_error("no test inputs to score");

  std::vector<double> avg(candidates.size(), 0.0);
  parallel_for(candidates.size(), threads, [&](std::size_t ci) {
    RegressionSetEvaluator eval(calib, candidates[ci], alpha);
    // integer grid-point totals keep equal-length candidates exactly tied
    std::size_t total = 0;
    for (std::size_t t = 0; t < test_predictions.rows; ++t) {
      auto set = eval.set_on_grid(test_predictions.row(t), grid);
      for (bool b : set.mask) total += b;
    }
    avg[ci] = static_cast<double>(total) * grid.step() /
              static_cast<double>(test_predictions.rows);
  });
  return pick_argmin(candidates, std::move(avg));
}

PSearchOutcome select_p(
    const ScoreMatrix& calib,
    const std::vector<std::vector<TestScoreProfile>>& test_class_profiles,
    std::span<const AggregatorSpec> candidates, Alpha alpha, unsigned threads) {
  require_sum_candidate(candidates);
  if (test_class_profiles.empty())
    throw contract_error("no test inputs to score");

  std::vector<double> avg(candidates.size(), 0.0);
  parallel_for(candidates.size(), threads, [&](std::size_t ci) {
    std::size_t total = 0;
    for (const auto& profiles : test_class_profiles)
      total += sacp_classify(calib, profiles, candidates[ci], alpha).accepted.size();
    avg[ci] = static_cast<double>(total) /
              static_cast<double>(test_class_profiles.size());
  });
  return pick_argmin(candidates, std::move(avg));
}

std::vector<AggregatorSpec> default_power_grid(Task task) {
  const double hi = task == Task::regression ? 15.0 : 8.0;
  const double lo = -hi;
  constexpr std::size_t count = 61;
  std::vector<AggregatorSpec> specs;
  specs.reserve(count + 3);
  bool has_sum = false;
  for (std::size_t i = 0; i < count; ++i) {
    double p = lo + static_cast<double>(i) * (hi - lo) / (count - 1);
    if (std::abs(p) < 1e-6) continue;
    AggregatorSpec spec = AggregatorSpec::power(p);
    has_sum = has_sum || spec.kind() == AggKind::sum;
    specs.push_back(spec);
  }
  if (!has_sum) specs.push_back(AggregatorSpec::sum());
  specs.push_back(AggregatorSpec::min());
  specs.push_back(AggregatorSpec::max());
  return specs;
}

}  // namespace sacp
