#include "sacp/validate.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "sacp/aggregate.hpp"
#include "sacp/baselines.hpp"
#include "sacp/rng.hpp"
#include "sacp/sacp.hpp"

namespace sacp::validate {

namespace {

constexpr double kSignificance = 0.001;

ScoreMatrix random_score_matrix(Rng& rng, std::size_t n, std::size_t K) {
  Matrix m(n, K);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < K; ++k)
      m(i, k) = rng.exponential() * (1.0 + 0.5 * static_cast<double>(k));
  return ScoreMatrix(std::move(m));
}

}  // namespace

nlohmann::json Report::to_json() const {
  return {{"check", check},     {"params", params},
          {"trials", trials},   {"violations", violations},
          {"statistic", statistic}, {"pass", pass}};
}

Report check_rank_uniformity(std::size_t n, std::size_t trials,
                             std::uint64_t seed, std::size_t k_models,
                             bool negative_control) {
  if (n < 10 || trials < 1000)
    throw contract_error("uniformity check needs n >= 10 and trials >= 1000");

  std::vector<std::size_t> counts(n + 1, 0);
  const auto spec = AggregatorSpec::sum();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    Matrix cal(n, k_models);
    std::vector<double> test(k_models);
    for (std::size_t k = 0; k < k_models; ++k) {
      double scale = 1.0 + 0.5 * static_cast<double>(k);
      for (std::size_t i = 0; i < n; ++i) cal(i, k) = rng.exponential() * scale;
      test[k] = rng.exponential() * scale * (negative_control ? 2.0 : 1.0);
    }
    auto block = normalize_to_evalues(ScoreMatrix(std::move(cal)),
                                      TestScoreProfile(std::move(test)));
    auto agg = apply_aggregator(block, spec);
    std::size_t rank = 1;
    for (double f : agg.f_cal) rank += f < agg.f_test;
    ++counts[rank - 1];
  }

  const double expected = static_cast<double>(trials) / static_cast<double>(n + 1);
  double chi2 = 0.0;
  for (std::size_t r = 0; r <= n; ++r) {
    double diff = static_cast<double>(counts[r]) - expected;
    chi2 += diff * diff / expected;
  }
  boost::math::chi_squared dist(static_cast<double>(n));
  double critical = boost::math::quantile(dist, 1.0 - kSignificance);

  Report rep;
  rep.check = "rank_uniformity";
  rep.params = {{"n", n},
                {"k_models", k_models},
                {"seed", seed},
                {"significance", kSignificance},
                {"critical", critical},
                {"negative_control", negative_control}};
  rep.trials = trials;
  rep.statistic = chi2;
  rep.violations = chi2 > critical ? 1 : 0;
  rep.pass = chi2 <= critical;
  return rep;
}

Report check_quantile_lemma(std::size_t trials, std::size_t n, std::size_t K,
                            Alpha alpha, std::uint64_t seed) {
  if (alpha.value() < static_cast<double>(K) / static_cast<double>(n + 1))
    throw config_error("quantile lemma needs alpha >= K/(n+1)");
  Alpha alpha_k(alpha.value() / static_cast<double>(K));

  std::size_t violations = 0;
  double max_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    // arbitrary real entries; the lemma is distribution-free
    Matrix m(n, K);
    for (double& v : m.data) v = rng.normal() * (1.0 + 4.0 * rng.uniform01());

    std::vector<double> rowsums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < K; ++k) rowsums[i] += m(i, k);

    auto rank_sum = upper_quantile_index(n, alpha);
    auto rank_col = upper_quantile_index(n, alpha_k);
    if (!rank_sum || !rank_col)
      throw config_error("quantile rank left the sample range");
    double lhs = order_statistic(rowsums, *rank_sum);
    double rhs = 0.0;
    std::vector<double> col(n);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < n; ++i) col[i] = m(i, k);
      rhs += order_statistic(col, *rank_col);
    }
    double slack = 1e-9 * std::max(1.0, std::abs(rhs));
    if (lhs > rhs + slack) ++violations;
    max_gap = std::max(max_gap, lhs - rhs);
  }

  Report rep;
  rep.check = "quantile_lemma";
  rep.params = {{"n", n}, {"K", K}, {"alpha", alpha.value()}, {"seed", seed}};
  rep.trials = trials;
  rep.violations = violations;
  rep.statistic = max_gap;  // <= 0 when the bound holds everywhere
  rep.pass = violations == 0;
  return rep;
}

Report check_worst_case_bound(std::size_t trials, std::size_t n, std::size_t K,
                              Alpha alpha, std::size_t grid_size,
                              std::uint64_t seed) {
  if (K < 2) throw config_error("worst-case bound needs K > 1");
  if (alpha.value() < static_cast<double>(K) / static_cast<double>(n + 1))
    throw config_error("worst-case bound needs alpha >= K/(n+1)");
  Alpha alpha_k(alpha.value() / static_cast<double>(K));

  std::size_t violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));

    // linear data with K perturbed linear predictors
    const std::size_t d = 3;
    std::vector<double> beta(d);
    for (double& b : beta) b = rng.normal();
    Matrix model_coef(K, d);
    std::vector<double> model_bias(K);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < d; ++j)
        model_coef(k, j) = beta[j] + 0.4 * rng.normal();
      model_bias[k] = 0.3 * rng.normal();
    }

    Matrix preds_cal(n, K);
    std::vector<double> y_cal(n);
    std::vector<double> x(d);
    auto draw_row = [&](std::span<double> preds, double& y) {
      for (std::size_t j = 0; j < d; ++j) x[j] = rng.normal();
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += beta[j] * x[j];
      y = mean + rng.normal();
      for (std::size_t k = 0; k < K; ++k) {
        double acc = model_bias[k];
        for (std::size_t j = 0; j < d; ++j) acc += model_coef(k, j) * x[j];
        preds[k] = acc;
      }
    };
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(K);
      draw_row(row, y_cal[i]);
      for (std::size_t k = 0; k < K; ++k) preds_cal(i, k) = row[k];
    }
    std::vector<double> preds_test(K);
    double y_test;
    draw_row(preds_test, y_test);

    ScoreMatrix calib = [&] {
      Matrix s(n, K);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < K; ++k)
          s(i, k) = std::abs(y_cal[i] - preds_cal(i, k));
      return ScoreMatrix(std::move(s));
    }();

    // any positive exponent is admissible; rotate through a few
    AggregatorSpec spec = AggregatorSpec::sum();
    switch (t % 4) {
      case 1: spec = AggregatorSpec::power(0.5); break;
      case 2: spec = AggregatorSpec::power(2.0); break;
      case 3: spec = AggregatorSpec::power(7.0); break;
      default: break;
    }

    TargetGrid grid = TargetGrid::from_targets(y_cal, grid_size);
    double set_length = sacp_regress(calib, preds_test, grid, spec, alpha).length;

    auto [lo, hi] = std::minmax_element(preds_test.begin(), preds_test.end());
    double disagreement = *hi - *lo;
    double widest = 0.0;
    auto rank = upper_quantile_index(n, alpha_k);
    if (!rank) throw config_error("per-model quantile left the sample range");
    for (std::size_t k = 0; k < K; ++k) {
      auto col = calib.column(k);
      widest = std::max(widest, 2.0 * order_statistic(col, *rank));
    }
    double bound = disagreement + widest + 2.0 * grid.step();
    double excess = set_length - bound;
    if (excess > 1e-9 * std::max(1.0, bound)) ++violations;
    max_excess = std::max(max_excess, excess);
  }

  Report rep;
  rep.check = "worst_case_bound";
  rep.params = {{"n", n},
                {"K", K},
                {"alpha", alpha.value()},
                {"grid_size", grid_size},
                {"seed", seed}};
  rep.trials = trials;
  rep.violations = violations;
  rep.statistic = max_excess;  // <= 0 when the bound holds everywhere
  rep.pass = violations == 0;
  return rep;
}

Report check_rho_invariance(std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw contract_error("need at least one trial");

  std::size_t violations = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    const std::size_t n = 5 + rng.uniform_index(36);
    const std::size_t K = 1 + rng.uniform_index(6);
    Alpha alpha(0.02 + 0.48 * rng.uniform01());

    AggregatorSpec spec = AggregatorSpec::sum();
    switch (rng.uniform_index(4)) {
      case 1: {
        double p = rng.uniform(0.1, 6.0) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
        spec = AggregatorSpec::power(p);
        break;
      }
      case 2: spec = AggregatorSpec::min(); break;
      case 3: spec = AggregatorSpec::max(); break;
      default: break;
    }

    ScoreMatrix calib = random_score_matrix(rng, n, K);
    std::vector<double> test(K);
    for (double& v : test) v = rng.exponential();
    auto block = normalize_to_evalues(calib, TestScoreProfile(std::move(test)));
    auto agg = apply_aggregator(block, spec);

    bool base = membership_threshold(agg.f_cal, spec, alpha).accepts(agg.f_test);

    // rho = log: strictly increasing, same comparison side
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(agg.f_cal[i]);
    bool via_log =
        membership_threshold(logs, spec, alpha).accepts(std::log(agg.f_test));

    // rho = negation: strictly decreasing, comparison side flips
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) neg[i] = -agg.f_cal[i];
    bool via_neg;
    if (spec.direction() == Direction::increasing) {
      auto rank = lower_quantile_index(n, alpha);
      via_neg = !rank || -agg.f_test >= order_statistic(neg, *rank);
    } else {
      auto rank = upper_quantile_index(n, alpha);
      via_neg = !rank || -agg.f_test <= order_statistic(neg, *rank);
    }

    if (base != via_log || base != via_neg) ++violations;
  }

  Report rep;
  rep.check = "rho_invariance";
  rep.params = {{"seed", seed}};
  rep.trials = trials;
  rep.violations = violations;
  rep.statistic = static_cast<double>(violations);
  rep.pass = violations == 0;
  return rep;
}

}  // namespace sacp::validate
