#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sacp/core.hpp"

namespace sacp {

enum class AggKind { sum, power, min, max };
enum class Direction { increasing, decreasing };

/// A monotone aggregating function phi applied coordinatewise and summed,
/// Phi(x) = sum_k phi(x_k), together with its derived direction. min and max
/// are the limit members of the power family and are taken directly as Phi.
class AggregatorSpec {
 public:
  static AggregatorSpec sum() { return AggregatorSpec(AggKind::sum, 1.0); }
  static AggregatorSpec min() { return AggregatorSpec(AggKind::min, 0.0); }
  static AggregatorSpec max() { return AggregatorSpec(AggKind::max, 0.0); }

  /// power(1) is the plain sum and normalizes to it, so sum-vs-power(1)
  /// comparisons are exact. |p| below 1e-6 is rejected as degenerate.
  static AggregatorSpec power(double p) {
    if (!std::isfinite(p) || std::abs(p) < 1e-6)
      throw contract_error("power exponent too close to zero");
    if (p == 1.0) return sum();
    return AggregatorSpec(AggKind::power, p);
  }

  AggKind kind() const { return kind_; }
  double exponent() const { return exponent_; }

  Direction direction() const {
    return (kind_ == AggKind::power && exponent_ < 0.0) ? Direction::decreasing
                                                        : Direction::increasing;
  }

  bool operator==(const AggregatorSpec& other) const {
    return kind_ == other.kind_ &&
           (kind_ != AggKind::power || exponent_ == other.exponent_);
  }

  std::string name() const;

 private:
  AggregatorSpec(AggKind kind, double exponent) : kind_(kind), exponent_(exponent) {}
  AggKind kind_;
  double exponent_;
};

/// Scores normalized per model: each entry is the raw score divided by the
/// per-column mean of all n+1 scores (calibration plus the test candidate).
/// For every column, sum(e_cal) + e_test == n + 1.
struct EValueBlock {
  Matrix e_cal;                       // n x K
  std::vector<double> e_test;        // K
  std::vector<double> denominators;  // K, all positive
};

struct AggregatedScores {
  std::vector<double> f_cal;
  double f_test = 0.0;
};

/// Membership rule for one candidate: accept when the aggregated test score
/// falls on the right side of the calibration quantile. An out-of-range
/// quantile rank degenerates to accept-all.
struct MembershipRule {
  bool accept_all = false;
  bool upper = true;  // true: f_test <= threshold; false: f_test >= threshold
  double threshold = 0.0;

  bool accepts(double f_test) const {
    if (accept_all) return true;
    return upper ? f_test <= threshold : f_test >= threshold;
  }
};

EValueBlock normalize_to_evalues(const ScoreMatrix& calib,
                                 const TestScoreProfile& test);

AggregatedScores apply_aggregator(const EValueBlock& block,
                                  const AggregatorSpec& spec);

MembershipRule membership_threshold(std::span<const double> f_cal,
                                    const AggregatorSpec& spec, Alpha alpha);

/// pow that saturates to the largest finite double instead of overflowing;
/// base must be positive, so the result is never NaN.
inline double sat_pow(double base, double p) {
  double r = std::pow(base, p);
  if (r > std::numeric_limits<double>::max())
    return std::numeric_limits<double>::max();
  return r;
}

inline double sat_cap(double v) {
  if (v > std::numeric_limits<double>::max())
    return std::numeric_limits<double>::max();
  return v;
}

}  // namespace sacp
