#include "sacp/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "sacp/baselines.hpp"
#include "sacp/par.hpp"
#include "sacp/rng.hpp"
#include "sacp/sacp.hpp"
#include "sacp/scores.hpp"

namespace sacp::bench {

namespace {

constexpr std::uint64_t kStreamSynth = 0x11;
constexpr std::uint64_t kStreamSplit = 0x22;
constexpr std::uint64_t kStreamWagg = 0x33;
constexpr std::uint64_t kStreamCsa = 0x44;
constexpr std::uint64_t kStreamCr = 0x55;
constexpr std::uint64_t kStreamModel = 0x100;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& cell, double& out) {
  std::string t = trim(cell);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ingest_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

[[noreturn]] void ingest_fail(const std::string& path,
                              const std::vector<std::string>& offenders) {
  std::string msg = "malformed data in " + path + ":";
  std::size_t shown = std::min<std::size_t>(offenders.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + offenders[i];
  if (offenders.size() > shown)
    msg += "\n  (+" + std::to_string(offenders.size() - shown) + " more)";
  throw ingest_error(msg);
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

models::Dataset load_dataset_csv(const std::string& path, Task task,
                                 bool header) {
  auto lines = read_lines(path);
  std::size_t first = header ? 1 : 0;
  if (lines.size() <= first) throw ingest_error("no data rows in " + path);

  const std::size_t width = split_csv_line(lines[first]).size();
  if (width < 2)
    throw ingest_error(path + ": need at least one feature column plus target");

  const std::size_t n = lines.size() - first;
  models::Dataset data;
  data.task = task;
  data.X = Matrix(n, width - 1);
  data.y.resize(n);

  std::vector<std::string> offenders;
  for (std::size_t r = 0; r < n; ++r) {
    auto cells = split_csv_line(lines[first + r]);
    if (cells.size() != width) {
      offenders.push_back("row " + std::to_string(first + r + 1) + ": expected " +
                          std::to_string(width) + " columns, got " +
                          std::to_string(cells.size()));
      continue;
    }
    for (std::size_t c = 0; c < width; ++c) {
      double v;
      if (!parse_double(cells[c], v)) {
        offenders.push_back("row " + std::to_string(first + r + 1) + ", column " +
                            std::to_string(c + 1) + ": not numeric: '" +
                            cells[c] + "'");
        continue;
      }
      if (c + 1 == width)
        data.y[r] = v;
      else
        data.X(r, c) = v;
    }
  }
  if (!offenders.empty()) ingest_fail(path, offenders);

  if (task == Task::classification) {
    double top = -1.0;
    for (double v : data.y) {
      if (v < 0.0 || v != std::floor(v))
        throw ingest_error(path + ": class labels must be nonnegative integers");
      top = std::max(top, v);
    }
    data.n_classes = static_cast<std::size_t>(top) + 1;
    if (data.n_classes < 2)
      throw ingest_error(path + ": need at least two classes");
  }
  return data;
}

ScoresData load_scores_csv(const std::string& calib_path,
                           const std::string& test_path) {
  auto calib_lines = read_lines(calib_path);
  if (calib_lines.size() < 2)
    throw ingest_error(calib_path + ": expected a header and score rows");
  auto head = split_csv_line(calib_lines[0]);
  const std::size_t K = head.size();
  for (std::size_t k = 0; k < K; ++k)
    if (trim(head[k]) != "model_" + std::to_string(k + 1))
      throw ingest_error(calib_path + ": header must be model_1..model_K");

  Matrix calib(calib_lines.size() - 1, K);
  std::vector<std::string> offenders;
  for (std::size_t r = 1; r < calib_lines.size(); ++r) {
    auto cells = split_csv_line(calib_lines[r]);
    if (cells.size() != K) {
      offenders.push_back("row " + std::to_string(r + 1) + ": ragged row");
      continue;
    }
    for (std::size_t k = 0; k < K; ++k) {
      double v;
      if (!parse_double(cells[k], v) || v < 0.0) {
        offenders.push_back("row " + std::to_string(r + 1) + ", column " +
                            std::to_string(k + 1) +
                            ": scores must be nonnegative numbers");
        break;
      }
      calib(r - 1, k) = v;
    }
  }
  if (!offenders.empty()) ingest_fail(calib_path, offenders);

  auto test_lines = read_lines(test_path);
  if (test_lines.size() < 2)
    throw ingest_error(test_path + ": expected a header and score rows");
  auto thead = split_csv_line(test_lines[0]);
  if (thead.size() != K + 2 || trim(thead[0]) != "test_id" ||
      trim(thead[1]) != "candidate")
    throw ingest_error(test_path +
                       ": header must be test_id,candidate,model_1..model_K");
  for (std::size_t k = 0; k < K; ++k)
    if (trim(thead[k + 2]) != "model_" + std::to_string(k + 1))
      throw ingest_error(test_path + ": model columns must match " + calib_path);

  ScoresData out{ScoreMatrix(std::move(calib)), {}};
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 1; r < test_lines.size(); ++r) {
    auto cells = split_csv_line(test_lines[r]);
    if (cells.size() != K + 2) {
      offenders.push_back("row " + std::to_string(r + 1) + ": ragged row");
      continue;
    }
    std::vector<double> s(K);
    bool ok = true;
    for (std::size_t k = 0; k < K && ok; ++k) {
      if (!parse_double(cells[k + 2], s[k]) || s[k] < 0.0) {
        offenders.push_back("row " + std::to_string(r + 1) + ", column " +
                            std::to_string(k + 3) +
                            ": scores must be nonnegative numbers");
        ok = false;
      }
    }
    if (!ok) continue;
    std::string id = trim(cells[0]);
    auto [it, fresh] = index.try_emplace(id, out.tests.size());
    if (fresh) out.tests.push_back(TestCandidates{id, {}, {}});
    auto& tc = out.tests[it->second];
    tc.candidates.push_back(trim(cells[1]));
    tc.profiles.emplace_back(std::move(s));
  }
  if (!offenders.empty()) ingest_fail(test_path, offenders);
  if (out.tests.empty()) throw ingest_error(test_path + ": no test rows");
  return out;
}

std::vector<std::pair<std::string, std::string>> load_labels_csv(
    const std::string& path) {
  auto lines = read_lines(path);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto cells = split_csv_line(lines[r]);
    if (r == 0 && cells.size() >= 2 && trim(cells[0]) == "test_id") continue;
    if (cells.size() != 2)
      throw ingest_error(path + ": row " + std::to_string(r + 1) +
                         " must be test_id,label");
    out.emplace_back(trim(cells[0]), trim(cells[1]));
  }
  return out;
}

models::Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n < 20 || spec.d < 1)
    throw config_error("synthetic data needs n >= 20 and d >= 1");
  Rng rng(mix_seed(seed, kStreamSynth));
  models::Dataset data;
  data.X = Matrix(spec.n, spec.d);
  data.y.resize(spec.n);

  if (spec.generator == "linear" || spec.generator == "heteroscedastic") {
    data.task = Task::regression;
    std::vector<double> beta(spec.d);
    for (double& b : beta) b = rng.normal();
    for (std::size_t i = 0; i < spec.n; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < spec.d; ++j) {
        data.X(i, j) = rng.normal();
        mean += beta[j] * data.X(i, j);
      }
      double scale = spec.generator == "linear"
                         ? 1.0
                         : 0.5 + std::abs(data.X(i, 0));
      data.y[i] = mean + spec.noise * scale * rng.normal();
    }
  } else if (spec.generator == "friedman") {
    if (spec.d < 5) throw config_error("friedman generator needs d >= 5");
    data.task = Task::regression;
    for (std::size_t i = 0; i < spec.n; ++i) {
      for (std::size_t j = 0; j < spec.d; ++j) data.X(i, j) = rng.uniform01();
      data.y[i] = 10.0 * std::sin(M_PI * data.X(i, 0) * data.X(i, 1)) +
                  20.0 * (data.X(i, 2) - 0.5) * (data.X(i, 2) - 0.5) +
                  10.0 * data.X(i, 3) + 5.0 * data.X(i, 4) +
                  spec.noise * rng.normal();
    }
  } else if (spec.generator == "gaussian-classes") {
    if (spec.n_classes < 2)
      throw config_error("gaussian-classes needs at least two classes");
    data.task = Task::classification;
    data.n_classes = spec.n_classes;
    Matrix means(spec.n_classes, spec.d);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < spec.d; ++j) {
        means(c, j) = rng.normal();
        norm2 += means(c, j) * means(c, j);
      }
      double norm = std::max(std::sqrt(norm2), 1e-12);
      for (std::size_t j = 0; j < spec.d; ++j)
        means(c, j) *= spec.separation / norm;
    }
    for (std::size_t i = 0; i < spec.n; ++i) {
      std::size_t label = rng.uniform_index(spec.n_classes);
      data.y[i] = static_cast<double>(label);
      for (std::size_t j = 0; j < spec.d; ++j)
        data.X(i, j) = means(label, j) + spec.noise * rng.normal();
    }
  } else {
    throw config_error("unknown synthetic generator: " + spec.generator);
  }
  return data;
}

std::pair<double, double> metrics(std::span<const char> coverage_flags,
                                  std::span<const double> lengths) {
  if (coverage_flags.empty() || lengths.empty())
    throw contract_error("metrics need at least one observation");
  double cov = 0.0;
  for (char f : coverage_flags) cov += f ? 1.0 : 0.0;
  cov /= static_cast<double>(coverage_flags.size());
  return {cov, mean_of(lengths)};
}

MethodSpec MethodSpec::parse(const nlohmann::json& j) {
  MethodSpec m;
  if (!j.contains("name")) throw config_error("method entry needs a name");
  m.name = j.at("name").get<std::string>();
  static const std::vector<std::string> known{
      "sacp", "sacp++", "split", "bl", "cm", "cr",
      "union", "intersection", "wagg", "csa"};
  if (std::find(known.begin(), known.end(), m.name) == known.end())
    throw config_error("unknown method: " + m.name);

  if (j.contains("p")) {
    m.aggregator = AggregatorSpec::power(j.at("p").get<double>());
  } else if (j.contains("aggregator")) {
    std::string a = j.at("aggregator").get<std::string>();
    if (a == "sum")
      m.aggregator = AggregatorSpec::sum();
    else if (a == "min")
      m.aggregator = AggregatorSpec::min();
    else if (a == "max")
      m.aggregator = AggregatorSpec::max();
    else
      throw config_error("unknown aggregator: " + a);
  }
  m.alpha_scale = j.value("alpha_scale", 1.0);
  if (!(m.alpha_scale > 0.0) || m.alpha_scale > 1.0)
    throw config_error("alpha_scale must lie in (0, 1]");
  m.n_weights = j.value("weights", static_cast<std::size_t>(200));
  m.directions = j.value("directions", static_cast<std::size_t>(50));
  m.bisect_iters = j.value("bisect_iters", static_cast<std::size_t>(20));
  if (j.contains("p_lo")) m.p_lo = j.at("p_lo").get<double>();
  if (j.contains("p_hi")) m.p_hi = j.at("p_hi").get<double>();
  m.p_count = j.value("p_count", static_cast<std::size_t>(61));

  if (j.contains("label")) {
    m.label = j.at("label").get<std::string>();
  } else if (m.name == "sacp" && !(m.aggregator == AggregatorSpec::sum())) {
    m.label = "sacp[" + m.aggregator.name() + "]";
  } else {
    m.label = m.name;
  }
  return m;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("task")) {
      std::string t = j.at("task").get<std::string>();
      if (t == "regression")
        cfg.task = Task::regression;
      else if (t == "classification")
        cfg.task = Task::classification;
      else
        throw config_error("unknown task: " + t);
    }

    const auto& ds = j.at("dataset");
    cfg.dataset_label = ds.value("name", std::string("dataset"));
    std::string src = ds.value("source", std::string("synthetic"));
    if (src == "synthetic") {
      cfg.source = SourceKind::synthetic;
      cfg.synthetic.generator = ds.value("generator", std::string("linear"));
      cfg.synthetic.n = ds.value("n", static_cast<std::size_t>(2000));
      cfg.synthetic.d = ds.value("d", static_cast<std::size_t>(8));
      cfg.synthetic.noise = ds.value("noise", 1.0);
      cfg.synthetic.n_classes = ds.value("classes", static_cast<std::size_t>(3));
      cfg.synthetic.separation = ds.value("separation", 3.0);
    } else if (src == "csv") {
      cfg.source = SourceKind::csv;
      cfg.csv.path = ds.at("path").get<std::string>();
      cfg.csv.header = ds.value("header", false);
    } else if (src == "scores") {
      cfg.source = SourceKind::scores;
      cfg.scores.calib_path = ds.at("calib_scores").get<std::string>();
      cfg.scores.test_path = ds.at("test_scores").get<std::string>();
      cfg.scores.labels_path = ds.value("labels", std::string());
    } else {
      throw config_error("unknown dataset source: " + src);
    }

    if (j.contains("models")) {
      for (const auto& mj : j.at("models")) {
        std::string kind = mj.at("kind").get<std::string>();
        if (kind == "ols")
          cfg.roster.push_back(models::ModelSpec::ols());
        else if (kind == "ridge")
          cfg.roster.push_back(models::ModelSpec::ridge(mj.value("lambda", 1.0)));
        else if (kind == "knn")
          cfg.roster.push_back(
              models::ModelSpec::knn(mj.value("neighbors", std::size_t{10})));
        else if (kind == "rff")
          cfg.roster.push_back(models::ModelSpec::random_feature_ridge(
              mj.value("width", std::size_t{64}), mj.value("lambda", 1.0)));
        else if (kind == "logistic")
          cfg.roster.push_back(models::ModelSpec::logistic_gd(
              mj.value("lr", 0.5), mj.value("iterations", std::size_t{300})));
        else if (kind == "knn_classifier")
          cfg.roster.push_back(models::ModelSpec::knn_classifier(
              mj.value("neighbors", std::size_t{10})));
        else
          throw config_error("unknown model kind: " + kind);
      }
    }

    if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else if (j.contains("seed_base")) {
      auto base = j.at("seed_base").get<std::uint64_t>();
      auto count = j.value("seed_count", static_cast<std::size_t>(20));
      cfg.seeds.clear();
      for (std::size_t i = 0; i < count; ++i) cfg.seeds.push_back(base + i);
    }

    if (j.contains("split")) {
      cfg.f_train = j.at("split").value("train", 0.8);
      cfg.f_cal = j.at("split").value("cal", 0.1);
      cfg.f_test = j.at("split").value("test", 0.1);
    }
    cfg.grid_size = j.value("grid_size", static_cast<std::size_t>(255));
    cfg.threads = j.value("threads", 0u);
    cfg.out_dir = j.value("out_dir", std::string("results"));

    if (!j.contains("methods") || j.at("methods").empty())
      throw config_error("config needs a nonempty methods list");
    for (const auto& mj : j.at("methods"))
      cfg.methods.push_back(MethodSpec::parse(mj));
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config parse error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (std::abs(f_train + f_cal + f_test - 1.0) > 1e-9)
    throw config_error("split fractions must sum to 1");
  if (!(f_cal > 0.0) || !(f_test > 0.0))
    throw config_error("calibration and test fractions must be positive");
  if (alphas.empty()) throw config_error("need at least one alpha");
  for (double a : alphas)
    if (!(a > 0.0) || !(a < 1.0)) throw config_error("alpha must lie in (0,1)");
  if (seeds.empty()) throw config_error("need at least one seed");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw config_error("seeds must be distinct");
  if (grid_size < 2) throw config_error("grid_size must be at least 2");
  if (methods.empty()) throw config_error("need at least one method");

  if (source != SourceKind::scores) {
    if (roster.empty()) throw config_error("need at least one model");
    for (const auto& m : roster)
      if (m.task() != task)
        throw config_error("model '" + m.name() + "' does not fit the task");
    if (source == SourceKind::synthetic) {
      bool cls = synthetic.generator == "gaussian-classes";
      if (cls != (task == Task::classification))
        throw config_error("generator '" + synthetic.generator +
                           "' does not match the task");
    }
  } else if (scores.labels_path.empty()) {
    throw config_error("scores source needs a labels file for coverage");
  }
}

namespace {

struct MethodEval {
  std::vector<char> flags;
  std::vector<double> lengths;
};

double quantile_or_inf(std::span<const double> col, Alpha alpha) {
  auto rank = upper_quantile_index(col.size(), alpha);
  if (!rank) return std::numeric_limits<double>::infinity();
  return order_statistic(col, *rank);
}

std::vector<AggregatorSpec> method_power_grid(const MethodSpec& m, Task task) {
  if (!m.p_lo && !m.p_hi && m.p_count == 61) return default_power_grid(task);
  double hi = m.p_hi.value_or(task == Task::regression ? 15.0 : 8.0);
  double lo = m.p_lo.value_or(-hi);
  if (!(hi > lo) || m.p_count < 2)
    throw config_error("invalid sacp++ search range");
  std::vector<AggregatorSpec> specs;
  bool has_sum = false;
  for (std::size_t i = 0; i < m.p_count; ++i) {
    double p = lo + static_cast<double>(i) * (hi - lo) /
                        static_cast<double>(m.p_count - 1);
    if (std::abs(p) < 1e-6) continue;
    auto spec = AggregatorSpec::power(p);
    has_sum = has_sum || spec.kind() == AggKind::sum;
    specs.push_back(spec);
  }
  if (!has_sum) specs.push_back(AggregatorSpec::sum());
  specs.push_back(AggregatorSpec::min());
  specs.push_back(AggregatorSpec::max());
  return specs;
}

// ---------------------------------------------------------------- regression

struct RegressionContext {
  const ScoreMatrix& calib;
  const Matrix& preds_test;  // T x K
  std::span<const double> y_test;
  const TargetGrid& grid;
  std::uint64_t seed;
};

MethodEval reg_interval_method(const RegressionContext& ctx,
                               std::span<const double> q_per_model,
                               std::span<const std::size_t> model_ids) {
  // membership of candidate y: |y - mu_k| <= q_k for the chosen models
  const std::size_t T = ctx.preds_test.rows;
  MethodEval out;
  out.flags.resize(T);
  out.lengths.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto preds = ctx.preds_test.row(t);
    bool cover = false;
    std::size_t count = 0;
    for (std::size_t m = 0; m < model_ids.size() && !cover; ++m)
      cover = std::abs(ctx.y_test[t] - preds[model_ids[m]]) <= q_per_model[m];
    for (std::size_t g = 0; g < ctx.grid.size(); ++g) {
      bool in = false;
      for (std::size_t m = 0; m < model_ids.size() && !in; ++m)
        in = std::abs(ctx.grid.point(g) - preds[model_ids[m]]) <= q_per_model[m];
      count += in;
    }
    out.flags[t] = cover;
    out.lengths[t] = static_cast<double>(count) * ctx.grid.step();
  }
  return out;
}

MethodEval reg_vote_method(const RegressionContext& ctx, const MethodSpec& m,
                           Alpha alpha, std::size_t alpha_index,
                           std::size_t method_index) {
  const std::size_t K = ctx.calib.cols();
  const std::size_t T = ctx.preds_test.rows;
  Alpha per_model(alpha.value() * m.alpha_scale);
  std::vector<double> q(K);
  for (std::size_t k = 0; k < K; ++k)
    q[k] = quantile_or_inf(ctx.calib.column(k), per_model);

  Rng cr_rng(mix_seed(mix_seed(ctx.seed, kStreamCr),
                      method_index * 131 + alpha_index));
  MethodEval out;
  out.flags.resize(T);
  out.lengths.resize(T);
  std::vector<baselines::CandidateMask> sets(K);
  for (std::size_t t = 0; t < T; ++t) {
    auto preds = ctx.preds_test.row(t);
    double u = m.name == "cr" ? cr_rng.uniform01() : 0.0;

    std::size_t exact_votes = 0;
    for (std::size_t k = 0; k < K; ++k)
      exact_votes += std::abs(ctx.y_test[t] - preds[k]) <= q[k];

    for (std::size_t k = 0; k < K; ++k) {
      sets[k].assign(ctx.grid.size(), false);
      for (std::size_t g = 0; g < ctx.grid.size(); ++g)
        sets[k][g] = std::abs(ctx.grid.point(g) - preds[k]) <= q[k];
    }
    baselines::CandidateMask merged;
    bool cover;
    if (m.name == "cm" || m.name == "cr") {
      merged = baselines::cr_merge(sets, u);
      cover = static_cast<double>(2 * exact_votes) >
              static_cast<double>(K) * (1.0 + u);
    } else if (m.name == "union") {
      merged = baselines::sets_union(sets);
      cover = exact_votes > 0;
    } else {
      merged = baselines::sets_intersection(sets);
      cover = exact_votes == K;
    }
    out.flags[t] = cover;
    std::size_t count = 0;
    for (bool b : merged) count += b;
    out.lengths[t] = static_cast<double>(count) * ctx.grid.step();
  }
  return out;
}

MethodEval reg_sacp_method(const RegressionContext& ctx,
                           const AggregatorSpec& spec, Alpha alpha) {
  RegressionSetEvaluator eval(ctx.calib, spec, alpha);
  const std::size_t T = ctx.preds_test.rows;
  MethodEval out;
  out.flags.resize(T);
  out.lengths.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto preds = ctx.preds_test.row(t);
    out.flags[t] = eval.member(preds, ctx.y_test[t]);
    out.lengths[t] = eval.set_on_grid(preds, ctx.grid).length;
  }
  return out;
}

MethodEval run_regression_method(const RegressionContext& ctx,
                                 const MethodSpec& m, Alpha alpha,
                                 std::size_t alpha_index,
                                 std::size_t method_index) {
  const std::size_t K = ctx.calib.cols();
  const std::size_t T = ctx.preds_test.rows;

  if (m.name == "split" || m.name == "bl") {
    std::size_t k = m.name == "split" ? 0 : baselines::bl_select(ctx.calib, alpha);
    double q = quantile_or_inf(ctx.calib.column(k), alpha);
    std::size_t ids[1] = {k};
    double qs[1] = {q};
    return reg_interval_method(ctx, qs, ids);
  }
  if (m.name == "cm" || m.name == "cr" || m.name == "union" ||
      m.name == "intersection")
    return reg_vote_method(ctx, m, alpha, alpha_index, method_index);
  if (m.name == "sacp") return reg_sacp_method(ctx, m.aggregator, alpha);
  if (m.name == "sacp++") {
    auto pool = method_power_grid(m, Task::regression);
    auto picked = select_p(ctx.calib, ctx.preds_test, ctx.grid, pool, alpha, 1);
    return reg_sacp_method(ctx, picked.chosen, alpha);
  }
  if (m.name == "wagg") {
    auto model = baselines::wagg_fit(ctx.calib, alpha, m.n_weights,
                                     mix_seed(ctx.seed, kStreamWagg));
    MethodEval out;
    out.flags.resize(T);
    out.lengths.resize(T);
    std::vector<double> s(K);
    for (std::size_t t = 0; t < T; ++t) {
      auto preds = ctx.preds_test.row(t);
      auto score_at = [&](double y) {
        for (std::size_t k = 0; k < K; ++k)
          s[k] = std::max(std::abs(y - preds[k]), score_floor);
        return baselines::wagg_membership(model, s);
      };
      out.flags[t] = score_at(ctx.y_test[t]);
      std::size_t count = 0;
      for (std::size_t g = 0; g < ctx.grid.size(); ++g)
        count += score_at(ctx.grid.point(g));
      out.lengths[t] = static_cast<double>(count) * ctx.grid.step();
    }
    return out;
  }
  if (m.name == "csa") {
    auto model = baselines::csa_fit(ctx.calib, alpha, m.directions,
                                    m.bisect_iters, mix_seed(ctx.seed, kStreamCsa));
    MethodEval out;
    out.flags.resize(T);
    out.lengths.resize(T);
    std::vector<double> s(K);
    for (std::size_t t = 0; t < T; ++t) {
      auto preds = ctx.preds_test.row(t);
      auto member_at = [&](double y) {
        for (std::size_t k = 0; k < K; ++k)
          s[k] = std::max(std::abs(y - preds[k]), score_floor);
        return baselines::csa_membership(model, TestScoreProfile(s));
      };
      out.flags[t] = member_at(ctx.y_test[t]);
      std::size_t count = 0;
      for (std::size_t g = 0; g < ctx.grid.size(); ++g)
        count += member_at(ctx.grid.point(g));
      out.lengths[t] = static_cast<double>(count) * ctx.grid.step();
    }
    return out;
  }
  throw config_error("method '" + m.name + "' does not support regression");
}

// ------------------------------------------------------------ classification

struct ClassificationContext {
  const ScoreMatrix& calib;
  const std::vector<Matrix>* cal_class_scores;  // per model, n_cal x C; may be null
  const std::vector<std::vector<TestScoreProfile>>& profiles;  // T x C_t
  const std::vector<std::optional<std::size_t>>& true_class;
  std::uint64_t seed;
};

std::vector<std::vector<bool>> map_sets(
    const ClassificationContext& ctx,
    const std::function<std::vector<bool>(std::size_t)>& set_of) {
  std::vector<std::vector<bool>> out(ctx.profiles.size());
  for (std::size_t t = 0; t < ctx.profiles.size(); ++t) out[t] = set_of(t);
  return out;
}

std::vector<std::vector<bool>> classification_sets(
    const ClassificationContext& ctx, const MethodSpec& m, Alpha alpha,
    std::size_t alpha_index, std::size_t method_index) {
  const std::size_t K = ctx.calib.cols();

  auto per_model_set = [&](std::size_t t, std::size_t k, double q) {
    const auto& profs = ctx.profiles[t];
    std::vector<bool> s(profs.size(), false);
    for (std::size_t c = 0; c < profs.size(); ++c) s[c] = profs[c][k] <= q;
    return s;
  };

  if (m.name == "split" || m.name == "bl") {
    std::size_t k = 0;
    if (m.name == "bl")
      k = ctx.cal_class_scores
              ? baselines::bl_select(ctx.calib, *ctx.cal_class_scores, alpha)
              : baselines::bl_select(ctx.calib, alpha);
    double q = quantile_or_inf(ctx.calib.column(k), alpha);
    return map_sets(ctx, [&](std::size_t t) { return per_model_set(t, k, q); });
  }
  if (m.name == "cm" || m.name == "cr" || m.name == "union" ||
      m.name == "intersection") {
    Alpha per_model(alpha.value() * m.alpha_scale);
    std::vector<double> q(K);
    for (std::size_t k = 0; k < K; ++k)
      q[k] = quantile_or_inf(ctx.calib.column(k), per_model);
    Rng cr_rng(mix_seed(mix_seed(ctx.seed, kStreamCr),
                        method_index * 131 + alpha_index));
    return map_sets(ctx, [&](std::size_t t) {
      std::vector<baselines::CandidateMask> sets(K);
      for (std::size_t k = 0; k < K; ++k) sets[k] = per_model_set(t, k, q[k]);
      if (m.name == "cm") return baselines::cm_merge(sets);
      if (m.name == "cr") return baselines::cr_merge(sets, cr_rng.uniform01());
      if (m.name == "union") return baselines::sets_union(sets);
      return baselines::sets_intersection(sets);
    });
  }
  if (m.name == "sacp" || m.name == "sacp++") {
    AggregatorSpec spec = m.aggregator;
    if (m.name == "sacp++") {
      auto pool = method_power_grid(m, Task::classification);
      spec = select_p(ctx.calib, ctx.profiles, pool, alpha, 1).chosen;
    }
    return map_sets(ctx, [&](std::size_t t) {
      auto set = sacp_classify(ctx.calib, ctx.profiles[t], spec, alpha);
      std::vector<bool> mask(ctx.profiles[t].size(), false);
      for (std::size_t c : set.accepted) mask[c] = true;
      return mask;
    });
  }
  if (m.name == "wagg") {
    auto model =
        ctx.cal_class_scores
            ? baselines::wagg_fit(ctx.calib, *ctx.cal_class_scores, alpha,
                                  m.n_weights, mix_seed(ctx.seed, kStreamWagg))
            : baselines::wagg_fit(ctx.calib, alpha, m.n_weights,
                                  mix_seed(ctx.seed, kStreamWagg));
    return map_sets(ctx, [&](std::size_t t) {
      const auto& profs = ctx.profiles[t];
      std::vector<bool> s(profs.size(), false);
      for (std::size_t c = 0; c < profs.size(); ++c)
        s[c] = baselines::wagg_membership(model, profs[c].scores());
      return s;
    });
  }
  if (m.name == "csa") {
    auto model = baselines::csa_fit(ctx.calib, alpha, m.directions,
                                    m.bisect_iters, mix_seed(ctx.seed, kStreamCsa));
    return map_sets(ctx, [&](std::size_t t) {
      const auto& profs = ctx.profiles[t];
      std::vector<bool> s(profs.size(), false);
      for (std::size_t c = 0; c < profs.size(); ++c)
        s[c] = baselines::csa_membership(model, profs[c]);
      return s;
    });
  }
  throw config_error("method '" + m.name + "' does not support classification");
}

MethodEval run_classification_method(const ClassificationContext& ctx,
                                     const MethodSpec& m, Alpha alpha,
                                     std::size_t alpha_index,
                                     std::size_t method_index) {
  auto sets = classification_sets(ctx, m, alpha, alpha_index, method_index);
  MethodEval out;
  out.flags.resize(sets.size());
  out.lengths.resize(sets.size());
  for (std::size_t t = 0; t < sets.size(); ++t) {
    std::size_t count = 0;
    for (bool b : sets[t]) count += b;
    out.lengths[t] = static_cast<double>(count);
    out.flags[t] = ctx.true_class[t].has_value() && sets[t][*ctx.true_class[t]];
  }
  return out;
}

// -------------------------------------------------------------- seed workers

std::vector<std::size_t> take(const std::vector<std::size_t>& perm,
                              std::size_t from, std::size_t count) {
  return {perm.begin() + static_cast<std::ptrdiff_t>(from),
          perm.begin() + static_cast<std::ptrdiff_t>(from + count)};
}

std::vector<RunRow> run_seed_with_models(const ExperimentConfig& cfg,
                                         const models::Dataset* shared,
                                         std::uint64_t seed) {
  models::Dataset generated;
  const models::Dataset* data = shared;
  if (cfg.source == SourceKind::synthetic) {
    generated = synth_generate(cfg.synthetic, mix_seed(seed, kStreamSynth));
    data = &generated;
  }
  const std::size_t n = data->size();
  auto n_train = static_cast<std::size_t>(cfg.f_train * static_cast<double>(n));
  auto n_cal = static_cast<std::size_t>(cfg.f_cal * static_cast<double>(n));
  std::size_t n_test = n - n_train - n_cal;
  if (n_train < 1 || n_cal < 1 || n_test < 1)
    throw config_error("split leaves an empty partition");

  Rng split_rng(mix_seed(seed, kStreamSplit));
  auto perm = split_rng.permutation(n);
  auto train_rows = take(perm, 0, n_train);
  auto cal_rows = take(perm, n_train, n_cal);
  auto test_rows = take(perm, n_train + n_cal, n_test);

  auto standardizer = models::Standardizer::fit(*data, train_rows);
  Matrix X_train = standardizer.transform(data->X, train_rows);
  Matrix X_cal = standardizer.transform(data->X, cal_rows);
  Matrix X_test = standardizer.transform(data->X, test_rows);
  auto y_train = standardizer.transform_targets(data->y, train_rows);
  auto y_cal = standardizer.transform_targets(data->y, cal_rows);
  auto y_test = standardizer.transform_targets(data->y, test_rows);

  const std::size_t K = cfg.roster.size();
  std::vector<models::FittedModel> fitted;
  fitted.reserve(K);
  for (std::size_t k = 0; k < K; ++k)
    fitted.push_back(models::fit(cfg.roster[k], X_train, y_train,
                                 data->n_classes, mix_seed(seed, kStreamModel + k)));

  std::vector<RunRow> rows;
  auto run_named = [&](const MethodSpec& m, auto&& fn) -> MethodEval {
    try {
      return fn();
    } catch (const config_error& e) {
      throw config_error("method '" + m.label + "': " + e.what());
    }
  };
  auto emit = [&](const MethodSpec& m, double alpha_value, MethodEval eval,
                  double wall_ms) {
    auto [cov, len] = metrics(eval.flags, eval.lengths);
    RunRow row;
    row.dataset = cfg.dataset_label;
    row.method = m.label;
    row.alpha = alpha_value;
    row.seed = seed;
    row.coverage = cov;
    row.avg_length = len;
    row.avg_length_destd = len * standardizer.target_scale();
    row.wall_ms = wall_ms;
    rows.push_back(std::move(row));
  };

  if (cfg.task == Task::regression) {
    Matrix preds_cal(n_cal, K), preds_test(n_test, K);
    for (std::size_t k = 0; k < K; ++k) {
      auto pc = fitted[k].predict(X_cal);
      auto pt = fitted[k].predict(X_test);
      for (std::size_t i = 0; i < n_cal; ++i) preds_cal(i, k) = pc[i];
      for (std::size_t i = 0; i < n_test; ++i) preds_test(i, k) = pt[i];
    }
    ScoreMatrix calib = build_calibration_scores(preds_cal, y_cal);
    TargetGrid grid = TargetGrid::from_targets(y_cal, cfg.grid_size);
    RegressionContext ctx{calib, preds_test, y_test, grid, seed};

    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
      Alpha alpha(cfg.alphas[ai]);
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        auto start = std::chrono::steady_clock::now();
        MethodEval eval = run_named(cfg.methods[mi], [&] {
          return run_regression_method(ctx, cfg.methods[mi], alpha, ai, mi);
        });
        double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        emit(cfg.methods[mi], cfg.alphas[ai], std::move(eval), wall_ms);
      }
    }
  } else {
    auto labels = data->class_labels();
    const std::size_t C = data->n_classes;
    std::vector<std::size_t> labels_cal(n_cal), labels_test(n_test);
    for (std::size_t i = 0; i < n_cal; ++i) labels_cal[i] = labels[cal_rows[i]];
    for (std::size_t i = 0; i < n_test; ++i) labels_test[i] = labels[test_rows[i]];

    std::vector<Matrix> probs_cal(K), probs_test(K);
    for (std::size_t k = 0; k < K; ++k) {
      probs_cal[k] = fitted[k].predict_proba(X_cal);
      probs_test[k] = fitted[k].predict_proba(X_test);
      validate_row_stochastic(probs_cal[k]);
      validate_row_stochastic(probs_test[k]);
    }
    ScoreMatrix calib = build_calibration_scores(probs_cal, labels_cal);

    std::vector<Matrix> cal_class_scores(K);
    for (std::size_t k = 0; k < K; ++k) {
      cal_class_scores[k] = Matrix(n_cal, C);
      for (std::size_t i = 0; i < n_cal; ++i)
        for (std::size_t c = 0; c < C; ++c)
          cal_class_scores[k](i, c) =
              std::max(1.0 - probs_cal[k](i, c), score_floor);
    }

    std::vector<std::vector<TestScoreProfile>> profiles;
    profiles.reserve(n_test);
    for (std::size_t t = 0; t < n_test; ++t) {
      std::vector<TestScoreProfile> per_class;
      per_class.reserve(C);
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> s(K);
        for (std::size_t k = 0; k < K; ++k) s[k] = 1.0 - probs_test[k](t, c);
        per_class.emplace_back(std::move(s));
      }
      profiles.push_back(std::move(per_class));
    }
    std::vector<std::optional<std::size_t>> truth(n_test);
    for (std::size_t t = 0; t < n_test; ++t) truth[t] = labels_test[t];

    ClassificationContext ctx{calib, &cal_class_scores, profiles, truth, seed};
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
      Alpha alpha(cfg.alphas[ai]);
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        auto start = std::chrono::steady_clock::now();
        MethodEval eval = run_named(cfg.methods[mi], [&] {
          return run_classification_method(ctx, cfg.methods[mi], alpha, ai, mi);
        });
        double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        emit(cfg.methods[mi], cfg.alphas[ai], std::move(eval), wall_ms);
      }
    }
  }
  return rows;
}

std::vector<RunRow> run_seed_with_scores(const ExperimentConfig& cfg,
                                         const ScoresData& data,
                                         const std::vector<std::optional<std::size_t>>& truth,
                                         std::uint64_t seed) {
  std::vector<std::vector<TestScoreProfile>> profiles;
  profiles.reserve(data.tests.size());
  for (const auto& tc : data.tests) profiles.push_back(tc.profiles);

  ClassificationContext ctx{data.calib, nullptr, profiles, truth, seed};
  std::vector<RunRow> rows;
  for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
    Alpha alpha(cfg.alphas[ai]);
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      auto start = std::chrono::steady_clock::now();
      MethodEval eval;
      try {
        eval = run_classification_method(ctx, cfg.methods[mi], alpha, ai, mi);
      } catch (const config_error& e) {
        throw config_error("method '" + cfg.methods[mi].label + "': " + e.what());
      }
      double wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      auto [cov, len] = metrics(eval.flags, eval.lengths);
      RunRow row;
      row.dataset = cfg.dataset_label;
      row.method = cfg.methods[mi].label;
      row.alpha = cfg.alphas[ai];
      row.seed = seed;
      row.coverage = cov;
      row.avg_length = len;
      row.avg_length_destd = len;
      row.wall_ms = wall_ms;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace

std::vector<RunRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  models::Dataset shared_dataset;
  ScoresData scores_data{ScoreMatrix(Matrix(1, 1, 1.0)), {}};
  std::vector<std::optional<std::size_t>> scores_truth;

  if (cfg.source == SourceKind::csv) {
    shared_dataset = load_dataset_csv(cfg.csv.path, cfg.task, cfg.csv.header);
  } else if (cfg.source == SourceKind::scores) {
    scores_data = load_scores_csv(cfg.scores.calib_path, cfg.scores.test_path);
    auto labels = load_labels_csv(cfg.scores.labels_path);
    scores_truth.assign(scores_data.tests.size(), std::nullopt);
    for (std::size_t t = 0; t < scores_data.tests.size(); ++t) {
      const auto& tc = scores_data.tests[t];
      for (const auto& [id, label] : labels) {
        if (id != tc.test_id) continue;
        for (std::size_t c = 0; c < tc.candidates.size(); ++c)
          if (tc.candidates[c] == label) scores_truth[t] = c;
      }
    }
  }

  std::vector<std::vector<RunRow>> per_seed(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.threads, [&](std::size_t si) {
    if (cfg.source == SourceKind::scores)
      per_seed[si] = run_seed_with_scores(cfg, scores_data, scores_truth,
                                          cfg.seeds[si]);
    else
      per_seed[si] = run_seed_with_models(
          cfg, cfg.source == SourceKind::csv ? &shared_dataset : nullptr,
          cfg.seeds[si]);
  });

  std::vector<RunRow> rows;
  for (auto& part : per_seed)
    for (auto& row : part) rows.push_back(std::move(row));
  std::sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    if (a.method != b.method) return a.method < b.method;
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return a.seed < b.seed;
  });
  return rows;
}

PredictOutput predict_scores(
    const ScoresData& data, const MethodSpec& method, Alpha alpha,
    std::uint64_t seed,
    const std::vector<std::pair<std::string, std::string>>* labels) {
  std::vector<std::vector<TestScoreProfile>> profiles;
  profiles.reserve(data.tests.size());
  for (const auto& tc : data.tests) profiles.push_back(tc.profiles);

  std::vector<std::optional<std::size_t>> truth(data.tests.size());
  if (labels) {
    for (std::size_t t = 0; t < data.tests.size(); ++t) {
      const auto& tc = data.tests[t];
      for (const auto& [id, label] : *labels) {
        if (id != tc.test_id) continue;
        for (std::size_t c = 0; c < tc.candidates.size(); ++c)
          if (tc.candidates[c] == label) truth[t] = c;
      }
    }
  }

  ClassificationContext ctx{data.calib, nullptr, profiles, truth, seed};
  auto sets = classification_sets(ctx, method, alpha, 0, 0);

  PredictOutput out;
  out.have_labels = labels != nullptr;
  std::vector<char> flags(sets.size());
  std::vector<double> lengths(sets.size());
  for (std::size_t t = 0; t < sets.size(); ++t) {
    PredictListing listing;
    listing.test_id = data.tests[t].test_id;
    std::size_t count = 0;
    for (std::size_t c = 0; c < sets[t].size(); ++c)
      if (sets[t][c]) {
        listing.accepted.push_back(data.tests[t].candidates[c]);
        ++count;
      }
    lengths[t] = static_cast<double>(count);
    flags[t] = truth[t].has_value() && sets[t][*truth[t]];
    out.listings.push_back(std::move(listing));
  }
  auto [cov, len] = metrics(flags, lengths);
  out.coverage = cov;
  out.avg_length = len;
  return out;
}

void write_results_csv(const std::string& path, const std::vector<RunRow>& rows) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw ingest_error("cannot write " + path);
  out << "dataset,method,alpha,seed,coverage,avg_length,wall_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%llu,%.6f,%.6f,%.3f", r.alpha,
                  static_cast<unsigned long long>(r.seed), r.coverage,
                  r.avg_length, r.wall_ms);
    out << r.dataset << ',' << r.method << ',' << buf << '\n';
  }
}

nlohmann::json summarize(const std::vector<RunRow>& rows) {
  std::map<std::tuple<std::string, std::string, double>,
           std::vector<const RunRow*>>
      groups;
  for (const auto& r : rows)
    groups[{r.dataset, r.method, r.alpha}].push_back(&r);

  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, members] : groups) {
    std::vector<double> cov, len, len_destd;
    for (const RunRow* r : members) {
      cov.push_back(r->coverage);
      len.push_back(r->avg_length);
      len_destd.push_back(r->avg_length_destd);
    }
    nlohmann::json g;
    g["dataset"] = std::get<0>(key);
    g["method"] = std::get<1>(key);
    g["alpha"] = std::get<2>(key);
    g["seeds"] = members.size();
    g["coverage"] = {{"mean", mean_of(cov)}, {"std", stddev_of(cov)}};
    g["avg_length"] = {{"mean", mean_of(len)}, {"std", stddev_of(len)}};
    g["avg_length_destd"] = {{"mean", mean_of(len_destd)},
                             {"std", stddev_of(len_destd)}};
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace sacp::bench
