#include "sacp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sacp/rng.hpp"

namespace sacp::baselines {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_universe(const std::vector<CandidateMask>& sets) {
  if (sets.empty()) throw contract_error("no prediction sets to merge");
  for (const auto& s : sets)
    if (s.size() != sets.front().size())
      throw contract_error("prediction sets span different candidate universes");
}

double conformal_quantile_or_inf(std::span<const double> scores, Alpha alpha) {
  auto rank = upper_quantile_index(scores.size(), alpha);
  if (!rank) return kInf;
  return order_statistic(scores, *rank);
}

}  // namespace

CalibrationSplit calibration_split(std::size_t n, std::uint64_t seed) {
  if (n < 4) throw config_error("need at least 4 calibration rows to split");
  Rng rng(mix_seed(seed, 0x51));
  auto perm = rng.permutation(n);
  CalibrationSplit out;
  std::size_t n1 = n / 2;
  out.half1.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
  out.half2.assign(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
  return out;
}

bool split_cp_single(std::span<const double> calib_col, double test_score,
                     Alpha alpha) {
  auto rank = upper_quantile_index(calib_col.size(), alpha);
  if (!rank) return true;
  return test_score <= order_statistic(calib_col, *rank);
}

std::size_t bl_select(const ScoreMatrix& calib, Alpha alpha) {
  std::size_t best = 0;
  double best_len = kInf;
  for (std::size_t k = 0; k < calib.cols(); ++k) {
    auto col = calib.column(k);
    double len = 2.0 * conformal_quantile_or_inf(col, alpha);
    if (len < best_len) {
      best_len = len;
      best = k;
    }
  }
  return best;
}

std::size_t bl_select(const ScoreMatrix& calib,
                      const std::vector<Matrix>& cal_class_scores, Alpha alpha) {
  if (cal_class_scores.size() != calib.cols())
    throw contract_error("per-class scores must cover every model");
  const std::size_t n = calib.rows();
  std::size_t best = 0;
  double best_size = kInf;
  for (std::size_t k = 0; k < calib.cols(); ++k) {
    const Matrix& scores = cal_class_scores[k];
    if (scores.rows != n)
      throw contract_error("per-class scores misaligned with calibration rows");
    auto col = calib.column(k);
    double q = conformal_quantile_or_inf(col, alpha);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < scores.cols; ++c)
        total += scores(i, c) <= q ? 1.0 : 0.0;
    double avg = total / static_cast<double>(n);
    if (avg < best_size) {
      best_size = avg;
      best = k;
    }
  }
  return best;
}

CandidateMask cm_merge(const std::vector<CandidateMask>& sets) {
  return cr_merge(sets, 0.0);
}

CandidateMask cr_merge(const std::vector<CandidateMask>& sets, double u) {
  check_same_universe(sets);
  if (!(u >= 0.0) || !(u < 1.0)) throw contract_error("u must lie in [0, 1)");
  const std::size_t universe = sets.front().size();
  const double bar = static_cast<double>(sets.size()) * (1.0 + u);
  CandidateMask out(universe, false);
  for (std::size_t j = 0; j < universe; ++j) {
    std::size_t votes = 0;
    for (const auto& s : sets) votes += s[j];
    out[j] = static_cast<double>(2 * votes) > bar;
  }
  return out;
}

CandidateMask sets_union(const std::vector<CandidateMask>& sets) {
  check_same_universe(sets);
  CandidateMask out(sets.front().size(), false);
  for (std::size_t j = 0; j < out.size(); ++j)
    for (const auto& s : sets)
      if (s[j]) {
        out[j] = true;
        break;
      }
  return out;
}

CandidateMask sets_intersection(const std::vector<CandidateMask>& sets) {
  check_same_universe(sets);
  CandidateMask out(sets.front().size(), true);
  for (std::size_t j = 0; j < out.size(); ++j)
    for (const auto& s : sets)
      if (!s[j]) {
        out[j] = false;
        break;
      }
  return out;
}

std::vector<WeightVector> simplex_candidates(std::size_t k_models,
                                             std::size_t count,
                                             std::uint64_t seed) {
  if (k_models < 1 || count < 1)
    throw contract_error("need at least one model and one candidate");
  std::vector<WeightVector> out;
  out.reserve(count);

  for (std::size_t k = 0; k < k_models && out.size() < count; ++k) {
    WeightVector v;
    v.w.assign(k_models, 0.0);
    v.w[k] = 1.0;
    out.push_back(std::move(v));
  }
  if (k_models == 1) {
    while (out.size() < count) out.push_back(out.front());
    return out;
  }

  // Kronecker sequence on [0,1)^(K-1) with a seeded offset; sorted coordinates
  // turn each point into uniform simplex gaps.
  const std::size_t d = k_models - 1;
  double phi = 2.0;
  for (int it = 0; it < 40; ++it)
    phi = std::pow(1.0 + phi, 1.0 / (static_cast<double>(d) + 1.0));
  std::vector<double> alpha(d), x(d);
  for (std::size_t j = 0; j < d; ++j)
    alpha[j] = std::fmod(1.0 / std::pow(phi, static_cast<double>(j) + 1.0), 1.0);
  Rng rng(mix_seed(seed, 0x57));
  for (std::size_t j = 0; j < d; ++j) x[j] = rng.uniform01();

  std::vector<double> cuts(d);
  while (out.size() < count) {
    for (std::size_t j = 0; j < d; ++j) {
      x[j] += alpha[j];
      if (x[j] >= 1.0) x[j] -= 1.0;
      cuts[j] = x[j];
    }
    std::sort(cuts.begin(), cuts.end());
    WeightVector v;
    v.w.resize(k_models);
    double prev = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      v.w[j] = cuts[j] - prev;
      prev = cuts[j];
    }
    v.w[d] = 1.0 - prev;
    out.push_back(std::move(v));
  }
  return out;
}

double wagg_combine(std::span<const double> weights,
                    std::span<const double> scores) {
  if (weights.size() != scores.size())
    throw contract_error("weight and score dimensions differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * scores[k];
  return acc;
}

bool wagg_membership(const WaggModel& model, std::span<const double> test_scores) {
  if (model.accept_all) return true;
  return wagg_combine(model.weights.w, test_scores) <= model.threshold;
}

WaggModel wagg_fit_with_candidates(const ScoreMatrix& calib,
                                   const std::vector<Matrix>* cal_class_scores,
                                   Alpha alpha,
                                   std::span<const WeightVector> candidates,
                                   std::uint64_t seed) {
  if (candidates.empty()) throw contract_error("empty weight candidate pool");
  const std::size_t K = calib.cols();
  for (const auto& c : candidates)
    if (c.w.size() != K) throw contract_error("weight dimension mismatch");

  CalibrationSplit rows = calibration_split(calib.rows(), seed);
  const std::size_t n1 = rows.half1.size();

  auto combine_rows = [&](const WeightVector& wv,
                          const std::vector<std::size_t>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += wv.w[k] * calib(idx[j], k);
      out[j] = acc;
    }
    return out;
  };

  // proxy on half 1: interval length for regression, mean class count for
  // classification
  std::size_t best = 0;
  double best_proxy = kInf;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto combined = combine_rows(candidates[c], rows.half1);
    double q = conformal_quantile_or_inf(combined, alpha);
    double proxy;
    if (cal_class_scores == nullptr) {
      proxy = 2.0 * q;
    } else {
      const std::size_t n_classes = cal_class_scores->front().cols;
      if (std::isinf(q)) {
        proxy = static_cast<double>(n_classes);
      } else {
        double total = 0.0;
        for (std::size_t i : rows.half1)
          for (std::size_t cls = 0; cls < n_classes; ++cls) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k)
              s += candidates[c].w[k] * (*cal_class_scores)[k](i, cls);
            total += s <= q ? 1.0 : 0.0;
          }
        proxy = total / static_cast<double>(n1);
      }
    }
    if (proxy < best_proxy) {
      best_proxy = proxy;
      best = c;
    }
  }

  WaggModel model;
  model.weights = candidates[best];
  auto combined2 = combine_rows(model.weights, rows.half2);
  auto rank = upper_quantile_index(combined2.size(), alpha);
  if (!rank) {
    model.accept_all = true;
  } else {
    model.threshold = order_statistic(combined2, *rank);
  }
  return model;
}

WaggModel wagg_fit(const ScoreMatrix& calib, Alpha alpha, std::size_t n_weights,
                   std::uint64_t seed) {
  auto pool = simplex_candidates(calib.cols(), n_weights, seed);
  return wagg_fit_with_candidates(calib, nullptr, alpha, pool, seed);
}

WaggModel wagg_fit(const ScoreMatrix& calib,
                   const std::vector<Matrix>& cal_class_scores, Alpha alpha,
                   std::size_t n_weights, std::uint64_t seed) {
  if (cal_class_scores.size() != calib.cols())
    throw contract_error("per-class scores must cover every model");
  auto pool = simplex_candidates(calib.cols(), n_weights, seed);
  return wagg_fit_with_candidates(calib, &cal_class_scores, alpha, pool, seed);
}

CsaModel csa_fit(const ScoreMatrix& calib, Alpha alpha,
                 std::size_t m_directions, std::size_t bisect_iters,
                 std::uint64_t seed) {
  if (m_directions < 1) throw contract_error("need at least one direction");
  const std::size_t K = calib.cols();
  CalibrationSplit rows = calibration_split(calib.rows(), seed);
  const std::size_t n1 = rows.half1.size();
  const std::size_t n2 = rows.half2.size();

  CsaModel model;
  model.directions = Matrix(m_directions, K);
  Rng rng(mix_seed(seed, 0xC5));
  for (std::size_t m = 0; m < m_directions; ++m) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double g = std::abs(rng.normal());
      model.directions(m, k) = g;
      norm2 += g * g;
    }
    double norm = std::sqrt(norm2);
    if (norm < 1e-300) {
      model.directions(m, 0) = 1.0;
      norm = 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) model.directions(m, k) /= norm;
  }

  auto project = [&](std::size_t m, std::size_t row) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      acc += model.directions(m, k) * calib(row, k);
    return acc;
  };

  // per-direction projections over half 1
  std::vector<std::vector<double>> proj(m_directions, std::vector<double>(n1));
  for (std::size_t m = 0; m < m_directions; ++m)
    for (std::size_t j = 0; j < n1; ++j) proj[m][j] = project(m, rows.half1[j]);

  std::vector<double> q(m_directions);
  auto quantiles_at = [&](double beta) {
    double raw = (1.0 - beta) * static_cast<double>(n1);
    std::size_t rank = static_cast<std::size_t>(std::ceil(raw));
    rank = std::clamp<std::size_t>(rank, 1, n1);
    for (std::size_t m = 0; m < m_directions; ++m)
      q[m] = order_statistic(proj[m], rank);
  };
  auto envelope_coverage = [&]() {
    std::size_t inside = 0;
    for (std::size_t j = 0; j < n1; ++j) {
      bool ok = true;
      for (std::size_t m = 0; m < m_directions && ok; ++m)
        ok = proj[m][j] <= q[m];
      inside += ok;
    }
    return static_cast<double>(inside) / static_cast<double>(n1);
  };

  // largest beta whose envelope still covers 1 - alpha of half 1
  double lo = 0.0, hi = 1.0;
  for (std::size_t it = 0; it < bisect_iters; ++it) {
    double mid = 0.5 * (lo + hi);
    quantiles_at(mid);
    if (envelope_coverage() >= 1.0 - alpha.value())
      lo = mid;
    else
      hi = mid;
  }
  model.beta_star = lo;
  quantiles_at(model.beta_star);
  model.thresholds = q;
  for (double& t : model.thresholds)
    if (t < score_floor) t = score_floor;

  // conformal rescale on half 2
  std::vector<double> ratios(n2);
  for (std::size_t j = 0; j < n2; ++j) {
    double best = 0.0;
    for (std::size_t m = 0; m < m_directions; ++m)
      best = std::max(best, project(m, rows.half2[j]) / model.thresholds[m]);
    ratios[j] = best;
  }
  auto rank = upper_quantile_index(n2, alpha);
  if (!rank)
    model.accept_all = true;
  else
    model.t_star = order_statistic(ratios, *rank);
  return model;
}

bool csa_membership(const CsaModel& model, const TestScoreProfile& test) {
  if (model.accept_all) return true;
  if (test.size() != model.directions.cols)
    throw contract_error("test profile does not match fitted dimension");
  double best = 0.0;
  for (std::size_t m = 0; m < model.directions.rows; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < test.size(); ++k)
      acc += model.directions(m, k) * test[k];
    best = std::max(best, acc / model.thresholds[m]);
  }
  return best <= model.t_star;
}

}  // namespace sacp::baselines
