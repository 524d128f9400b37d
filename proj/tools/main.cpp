#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "sacp/bench.hpp"
#include "sacp/validate.hpp"

namespace {

using nlohmann::json;

struct RunArgs {
  std::string config_path;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::size_t grid_size = 0;
  std::string methods;
  std::string p_grid;
  std::string out_dir;
  unsigned threads = 0;
  bool threads_set = false;
};

void apply_p_grid(sacp::bench::MethodSpec& m, const std::string& p_grid) {
  double lo, hi;
  std::size_t count;
  if (std::sscanf(p_grid.c_str(), "%lf:%lf:%zu", &lo, &hi, &count) != 3)
    throw sacp::config_error("--p-grid expects lo:hi:count");
  m.p_lo = lo;
  m.p_hi = hi;
  m.p_count = count;
}

int cmd_run(const RunArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw sacp::config_error("cannot open config: " + args.config_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw sacp::config_error(std::string("config is not valid JSON: ") + e.what());
  }

  auto cfg = sacp::bench::ExperimentConfig::from_json(j);
  // explicit flags win over the config file
  if (!args.alphas.empty()) cfg.alphas = args.alphas;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (args.grid_size > 0) cfg.grid_size = args.grid_size;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.threads_set) cfg.threads = args.threads;
  if (!args.methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(args.methods);
    std::string name;
    while (std::getline(ss, name, ','))
      cfg.methods.push_back(sacp::bench::MethodSpec::parse(json{{"name", name}}));
  }
  if (!args.p_grid.empty())
    for (auto& m : cfg.methods)
      if (m.name == "sacp++") apply_p_grid(m, args.p_grid);
  cfg.validate();

  auto rows = sacp::bench::run_experiment(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  std::string csv_path = cfg.out_dir + "/results.csv";
  std::string json_path = cfg.out_dir + "/summary.json";
  sacp::bench::write_results_csv(csv_path, rows);
  std::ofstream summary(json_path);
  summary << sacp::bench::summarize(rows).dump(2) << "\n";
  std::cout << "wrote " << csv_path << "\n";
  std::cout << "wrote " << json_path << "\n";
  return 0;
}

struct ValidateArgs {
  std::string suite;
  std::uint64_t seed = 7;
  std::size_t trials = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 0.0;
  std::size_t grid_size = 255;
  bool negative_control = false;
  std::string out_path;
};

int cmd_validate(const ValidateArgs& args) {
  using namespace sacp::validate;
  bool all = args.suite == "all";
  if (!all && args.suite != "uniformity" && args.suite != "lemma" &&
      args.suite != "bound" && args.suite != "rho")
    throw sacp::config_error("unknown validation suite: " + args.suite);

  std::vector<Report> reports;
  if (all || args.suite == "uniformity")
    reports.push_back(check_rank_uniformity(
        args.n ? args.n : 20, args.trials ? args.trials : 20000, args.seed,
        args.k ? args.k : 3, args.negative_control));
  if (all || args.suite == "lemma")
    reports.push_back(check_quantile_lemma(
        args.trials ? args.trials : 1000, args.n ? args.n : 50,
        args.k ? args.k : 4, sacp::Alpha(args.alpha > 0 ? args.alpha : 0.2),
        args.seed));
  if (all || args.suite == "bound")
    reports.push_back(check_worst_case_bound(
        args.trials ? args.trials : 200, args.n ? args.n : 200,
        args.k ? args.k : 3, sacp::Alpha(args.alpha > 0 ? args.alpha : 0.1),
        args.grid_size, args.seed));
  if (all || args.suite == "rho")
    reports.push_back(
        check_rho_invariance(args.trials ? args.trials : 1000, args.seed));

  json out = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    out.push_back(r.to_json());
    ok = ok && r.pass;
    std::cout << (r.pass ? "[pass] " : "[FAIL] ") << r.check
              << " statistic=" << r.statistic << " violations=" << r.violations
              << "\n";
  }
  if (!args.out_path.empty()) {
    std::ofstream f(args.out_path);
    f << out.dump(2) << "\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return ok ? 0 : 1;
}

struct PredictArgs {
  std::string calib_path, test_path, labels_path;
  std::string method = "sacp";
  double alpha = 0.1;
  std::uint64_t seed = 1;
  double p = 0.0;
  bool p_set = false;
  std::string aggregator;
  std::string p_grid;
};

int cmd_predict(const PredictArgs& args) {
  json mj{{"name", args.method}};
  if (args.p_set) mj["p"] = args.p;
  if (!args.aggregator.empty()) mj["aggregator"] = args.aggregator;
  auto method = sacp::bench::MethodSpec::parse(mj);
  if (!args.p_grid.empty() && method.name == "sacp++")
    apply_p_grid(method, args.p_grid);

  auto data = sacp::bench::load_scores_csv(args.calib_path, args.test_path);
  std::vector<std::pair<std::string, std::string>> labels;
  bool have_labels = !args.labels_path.empty();
  if (have_labels) labels = sacp::bench::load_labels_csv(args.labels_path);

  auto out = sacp::bench::predict_scores(data, method, sacp::Alpha(args.alpha),
                                         args.seed,
                                         have_labels ? &labels : nullptr);
  for (const auto& listing : out.listings)
    for (const auto& candidate : listing.accepted)
      std::cout << listing.test_id << "," << candidate << "\n";
  if (out.have_labels) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "coverage=%.6f,avg_length=%.6f",
                  out.coverage, out.avg_length);
    std::cout << buf << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal prediction with symmetric score aggregation"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("--config", run_args.config_path, "experiment config (JSON)")
      ->required();
  run->add_option("--alpha", run_args.alphas, "override miscoverage levels");
  run->add_option("--seed", run_args.seeds, "override the seed list");
  run->add_option("--grid-size", run_args.grid_size, "override the target grid");
  run->add_option("--methods", run_args.methods, "comma-separated method names");
  run->add_option("--p-grid", run_args.p_grid, "sacp++ search: lo:hi:count");
  run->add_option("--out", run_args.out_dir, "output directory");
  run->add_option("--threads", run_args.threads, "worker cap (1 = sequential)")
      ->each([&](const std::string&) { run_args.threads_set = true; });

  ValidateArgs val_args;
  auto* val = app.add_subcommand("validate", "run the theory checks");
  val->add_option("suite", val_args.suite,
                  "uniformity | lemma | bound | rho | all")
      ->required();
  val->add_option("--seed", val_args.seed, "base seed");
  val->add_option("--trials", val_args.trials, "trial count override");
  val->add_option("--n", val_args.n, "sample size override");
  val->add_option("--k", val_args.k, "model count override");
  val->add_option("--alpha", val_args.alpha, "miscoverage override");
  val->add_option("--grid-size", val_args.grid_size, "grid size (bound check)");
  val->add_flag("--negative-control", val_args.negative_control,
                "shift the test distribution; the uniformity check must fail");
  val->add_option("--out", val_args.out_path, "write the JSON report here");

  PredictArgs pred_args;
  auto* pred = app.add_subcommand("predict", "prediction sets from score CSVs");
  pred->add_option("--calib", pred_args.calib_path, "calibration scores CSV")
      ->required();
  pred->add_option("--test", pred_args.test_path, "test scores CSV")->required();
  pred->add_option("--labels", pred_args.labels_path, "true labels CSV");
  pred->add_option("--method", pred_args.method, "aggregation method");
  pred->add_option("--alpha", pred_args.alpha, "miscoverage level");
  pred->add_option("--seed", pred_args.seed, "seed for randomized methods");
  pred->add_option("--p", pred_args.p, "power exponent for sacp")
      ->each([&](const std::string&) { pred_args.p_set = true; });
  pred->add_option("--aggregator", pred_args.aggregator, "sum | min | max");
  pred->add_option("--p-grid", pred_args.p_grid, "sacp++ search: lo:hi:count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (val->parsed()) return cmd_validate(val_args);
    if (pred->parsed()) return cmd_predict(pred_args);
  } catch (const sacp::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sacp::ingest_error& e) {
    std::cerr << "ingest error: " << e.what() << "\n";
    return 3;
  } catch (const sacp::contract_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
