#include "sacp/aggregate.hpp"

#include <algorithm>
#include <cstdio>

namespace sacp {

std::string AggregatorSpec::name() const {
  switch (kind_) {
    case AggKind::sum:
      return "sum";
    case AggKind::min:
      return "min";
    case AggKind::max:
      return "max";
    case AggKind::power: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "power(%g)", exponent_);
      return buf;
    }
  }
  return "?";
}

EValueBlock normalize_to_evalues(const ScoreMatrix& calib,
                                 const TestScoreProfile& test) {
  const std::size_t n = calib.rows();
  const std::size_t K = calib.cols();
  if (test.size() != K)
    throw contract_error("test profile length does not match model count");

  EValueBlock block;
  block.e_cal = Matrix(n, K);
  block.e_test.resize(K);
  block.denominators.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    double denom = (calib.column_sum(k) + test[k]) / static_cast<double>(n + 1);
    block.denominators[k] = denom;
    for (std::size_t i = 0; i < n; ++i) block.e_cal(i, k) = calib(i, k) / denom;
    block.e_test[k] = test[k] / denom;
  }
  return block;
}

AggregatedScores apply_aggregator(const EValueBlock& block,
                                  const AggregatorSpec& spec) {
  const std::size_t n = block.e_cal.rows;
  const std::size_t K = block.e_cal.cols;

  auto merge_row = [&](std::span<const double> row) -> double {
    switch (spec.kind()) {
      case AggKind::sum: {
        double acc = 0.0;
        for (double v : row) acc += v;
        return sat_cap(acc);
      }
      case AggKind::power: {
        double acc = 0.0;
        for (double v : row) acc += sat_pow(v, spec.exponent());
        return sat_cap(acc);
      }
      case AggKind::min:
        return *std::min_element(row.begin(), row.end());
      case AggKind::max:
        return *std::max_element(row.begin(), row.end());
    }
    return 0.0;
  };

  AggregatedScores out;
  out.f_cal.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.f_cal[i] = merge_row(block.e_cal.row(i));
  out.f_test = merge_row(std::span<const double>(block.e_test.data(), K));
  return out;
}

MembershipRule membership_threshold(std::span<const double> f_cal,
                                    const AggregatorSpec& spec, Alpha alpha) {
  const std::size_t n = f_cal.size();
  if (n < 1) throw contract_error("need at least one calibration score");

  MembershipRule rule;
  if (spec.direction() == Direction::increasing) {
    rule.upper = true;
    auto rank = upper_quantile_index(n, alpha);
    if (!rank) {
      rule.accept_all = true;
      return rule;
    }
    rule.threshold = order_statistic(f_cal, *rank);
  } else {
    rule.upper = false;
    auto rank = lower_quantile_index(n, alpha);
    if (!rank) {
      rule.accept_all = true;
      return rule;
    }
    rule.threshold = order_statistic(f_cal, *rank);
  }
  return rule;
}

}  // namespace sacp
