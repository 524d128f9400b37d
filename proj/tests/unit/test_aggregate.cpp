#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sacp/aggregate.hpp"
#include "sacp/rng.hpp"

using namespace sacp;

namespace {

ScoreMatrix random_scores(Rng& rng, std::size_t n, std::size_t k) {
  Matrix m(n, k);
  for (double& v : m.data) v = 0.05 + rng.exponential();
  return ScoreMatrix(std::move(m));
}

TestScoreProfile random_profile(Rng& rng, std::size_t k) {
  std::vector<double> s(k);
  for (double& v : s) v = 0.05 + rng.exponential();
  return TestScoreProfile(std::move(s));
}

}  // namespace

TEST_CASE("aggregator spec directions and degeneracy") {
  CHECK(AggregatorSpec::sum().direction() == Direction::increasing);
  CHECK(AggregatorSpec::power(2.0).direction() == Direction::increasing);
  CHECK(AggregatorSpec::power(-1.0).direction() == Direction::decreasing);
  CHECK(AggregatorSpec::min().direction() == Direction::increasing);
  CHECK(AggregatorSpec::max().direction() == Direction::increasing);
  CHECK_THROWS_AS(AggregatorSpec::power(1e-9), contract_error);
  // exponent 1 is the plain sum
  CHECK(AggregatorSpec::power(1.0) == AggregatorSpec::sum());
}

TEST_CASE("e-value normalization on a tiny instance") {
  Matrix cal(2, 1);
  cal(0, 0) = 1.0;
  cal(1, 0) = 2.0;
  auto block = normalize_to_evalues(ScoreMatrix(cal), TestScoreProfile({3.0}));
  CHECK(block.denominators[0] == doctest::Approx(2.0));
  CHECK(block.e_cal(0, 0) == doctest::Approx(0.5));
  CHECK(block.e_cal(1, 0) == doctest::Approx(1.0));
  CHECK(block.e_test[0] == doctest::Approx(1.5));
}

TEST_CASE("equal scores normalize to all-ones") {
  Matrix cal(3, 2, 0.7);
  auto block = normalize_to_evalues(ScoreMatrix(cal), TestScoreProfile({0.7, 0.7}));
  for (double v : block.e_cal.data) CHECK(v == doctest::Approx(1.0));
  for (double v : block.e_test) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("per-column e-value mass identity on random blocks") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = 5, k = 3;
    auto cal = random_scores(rng, n, k);
    auto block = normalize_to_evalues(cal, random_profile(rng, k));
    for (std::size_t col = 0; col < k; ++col) {
      long double sum = block.e_test[col];  // extended-precision recheck
      for (std::size_t i = 0; i < n; ++i) sum += block.e_cal(i, col);
      CHECK(std::abs(static_cast<double>(sum) - double(n + 1)) <=
            1e-9 * double(n + 1));
    }
  }
}

TEST_CASE("normalization preserves per-model score order") {
  Rng rng(12);
  auto cal = random_scores(rng, 30, 4);
  auto block = normalize_to_evalues(cal, random_profile(rng, 4));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i + 1 < 30; ++i) {
      bool raw = cal(i, k) < cal(i + 1, k);
      bool norm = block.e_cal(i, k) < block.e_cal(i + 1, k);
      CHECK(raw == norm);
    }
}

TEST_CASE("aggregators on small rows") {
  Matrix cal(1, 2);
  cal(0, 0) = 1.0;
  cal(0, 1) = 2.0;
  EValueBlock block;
  block.e_cal = cal;
  block.e_test = {1.0, 2.0};
  block.denominators = {1.0, 1.0};

  CHECK(apply_aggregator(block, AggregatorSpec::power(2.0)).f_test ==
        doctest::Approx(5.0));
  CHECK(apply_aggregator(block, AggregatorSpec::power(-1.0)).f_test ==
        doctest::Approx(1.5));
  CHECK(apply_aggregator(block, AggregatorSpec::sum()).f_test ==
        doctest::Approx(3.0));
  block.e_test = {1.0, 2.0, 3.0};
  block.e_cal = Matrix(1, 3, 1.0);
  CHECK(apply_aggregator(block, AggregatorSpec::max()).f_test == 3.0);
  CHECK(apply_aggregator(block, AggregatorSpec::min()).f_test == 1.0);
}

TEST_CASE("extreme powers saturate instead of overflowing") {
  EValueBlock block;
  block.e_cal = Matrix(1, 2, 1e280);
  block.e_test = {1e280, 1e280};
  block.denominators = {1.0, 1.0};
  auto agg = apply_aggregator(block, AggregatorSpec::power(15.0));
  CHECK(std::isfinite(agg.f_test));
  CHECK(agg.f_test == std::numeric_limits<double>::max());
  auto agg2 = apply_aggregator(block, AggregatorSpec::power(-15.0));
  CHECK(std::isfinite(agg2.f_test));
}

TEST_CASE("membership thresholds") {
  const double f[] = {0.4, 0.8, 1.2, 1.6};
  auto up = membership_threshold(f, AggregatorSpec::sum(), Alpha(0.25));
  CHECK(!up.accept_all);
  CHECK(up.upper);
  CHECK(up.threshold == 1.6);
  CHECK(up.accepts(1.6));
  CHECK(!up.accepts(1.61));

  const double f9[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto sentinel = membership_threshold(f9, AggregatorSpec::sum(), Alpha(0.05));
  CHECK(sentinel.accept_all);
  CHECK(sentinel.accepts(1e300));

  auto low = membership_threshold(f, AggregatorSpec::power(-1.0), Alpha(0.25));
  CHECK(!low.accept_all);
  CHECK(!low.upper);
  CHECK(low.threshold == 0.4);
  CHECK(low.accepts(0.4));
  CHECK(!low.accepts(0.39));
}

TEST_CASE("monotone transforms commute with the matching quantile") {
  // strictly decreasing g: order_statistic(g(V), ceil((n+1)(1-a))) equals
  // g(order_statistic(V, floor((n+1)a))) when both ranks are in range
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    std::size_t n = 3 + rng.uniform_index(40);
    double a = 0.05 + 0.4 * rng.uniform01();
    std::vector<double> v(n);
    for (double& x : v) x = 0.1 + rng.exponential();
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) continue;

    auto upper = upper_quantile_index(n, Alpha(a));
    auto lower = lower_quantile_index(n, Alpha(a));
    if (!upper || !lower) continue;

    std::vector<double> neg(n), inv(n);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = -2.0 * v[i] + 1.0;
      inv[i] = 1.0 / v[i];
    }
    CHECK(order_statistic(neg, *upper) ==
          doctest::Approx(-2.0 * order_statistic(v, *lower) + 1.0));
    CHECK(order_statistic(inv, *upper) ==
          doctest::Approx(1.0 / order_statistic(v, *lower)));
  }
}

TEST_CASE("membership decisions survive monotone reparameterization") {
  Rng rng(14);
  int checked = 0;
  for (int t = 0; t < 400; ++t) {
    std::size_t n = 4 + rng.uniform_index(30);
    std::size_t k = 1 + rng.uniform_index(5);
    double a = 0.05 + 0.4 * rng.uniform01();
    AggregatorSpec spec = AggregatorSpec::sum();
    if (t % 3 == 1) spec = AggregatorSpec::power(2.0);
    if (t % 3 == 2) spec = AggregatorSpec::power(-1.5);

    auto cal = random_scores(rng, n, k);
    auto block = normalize_to_evalues(cal, random_profile(rng, k));
    auto agg = apply_aggregator(block, spec);

    bool base = membership_threshold(agg.f_cal, spec, Alpha(a)).accepts(agg.f_test);
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(agg.f_cal[i]);
    bool via_log = membership_threshold(logs, spec, Alpha(a))
                       .accepts(std::log(agg.f_test));
    CHECK(base == via_log);
    ++checked;
  }
  CHECK(checked == 400);
}
