#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sacp/aggregate.hpp"
#include "sacp/core.hpp"
#include "sacp/models.hpp"

namespace sacp::bench {

/// One aggregation method to run, with its hyperparameters.
struct MethodSpec {
  std::string name;   // sacp, sacp++, split, bl, cm, cr, union, intersection,
                      // wagg, csa
  std::string label;  // output column; defaults to name (+ aggregator)
  AggregatorSpec aggregator = AggregatorSpec::sum();  // sacp only
  double alpha_scale = 1.0;      // per-model level used by set mergers
  std::size_t n_weights = 200;   // wagg
  std::size_t directions = 50;   // csa
  std::size_t bisect_iters = 20; // csa
  std::optional<double> p_lo, p_hi;  // sacp++ search range
  std::size_t p_count = 61;

  static MethodSpec parse(const nlohmann::json& j);
};

struct SyntheticSpec {
  std::string generator;  // linear, friedman, heteroscedastic, gaussian-classes
  std::size_t n = 2000;
  std::size_t d = 8;
  double noise = 1.0;
  std::size_t n_classes = 3;
  double separation = 3.0;
};

struct CsvSpec {
  std::string path;
  bool header = false;
};

struct ScoresSpec {
  std::string calib_path;
  std::string test_path;
  std::string labels_path;  // optional; required by run_experiment
};

enum class SourceKind { synthetic, csv, scores };

struct ExperimentConfig {
  std::string dataset_label = "dataset";
  SourceKind source = SourceKind::synthetic;
  SyntheticSpec synthetic;
  CsvSpec csv;
  ScoresSpec scores;
  Task task = Task::regression;
  std::vector<models::ModelSpec> roster;
  std::vector<double> alphas{0.1};
  std::vector<std::uint64_t> seeds{1};
  double f_train = 0.8, f_cal = 0.1, f_test = 0.1;
  std::size_t grid_size = 255;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::string out_dir = "results";
  std::vector<MethodSpec> methods;

  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct RunRow {
  std::string dataset;
  std::string method;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double avg_length = 0.0;
  double avg_length_destd = 0.0;  // target units (equals avg_length otherwise)
  double wall_ms = 0.0;
};

/// Scores-only workflow: a calibration matrix plus per-test-point candidate
/// profiles keyed by (test id, candidate label).
struct TestCandidates {
  std::string test_id;
  std::vector<std::string> candidates;
  std::vector<TestScoreProfile> profiles;  // one per candidate
};

struct ScoresData {
  ScoreMatrix calib;
  std::vector<TestCandidates> tests;
};

models::Dataset load_dataset_csv(const std::string& path, Task task,
                                 bool header);

ScoresData load_scores_csv(const std::string& calib_path,
                           const std::string& test_path);

/// test_id -> true candidate label
std::vector<std::pair<std::string, std::string>> load_labels_csv(
    const std::string& path);

models::Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed);

/// Arithmetic means of the coverage flags and the set lengths, in index order.
std::pair<double, double> metrics(std::span<const char> coverage_flags,
                                  std::span<const double> lengths);

std::vector<RunRow> run_experiment(const ExperimentConfig& config);

struct PredictListing {
  std::string test_id;
  std::vector<std::string> accepted;
};

struct PredictOutput {
  std::vector<PredictListing> listings;
  bool have_labels = false;
  double coverage = 0.0;
  double avg_length = 0.0;
};

/// Runs one method on a scores-only input and lists the accepted candidates
/// per test id; coverage is reported when true labels are supplied.
PredictOutput predict_scores(
    const ScoresData& data, const MethodSpec& method, Alpha alpha,
    std::uint64_t seed,
    const std::vector<std::pair<std::string, std::string>>* labels);

void write_results_csv(const std::string& path, const std::vector<RunRow>& rows);
nlohmann::json summarize(const std::vector<RunRow>& rows);

}  // namespace sacp::bench
