#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "sacp_cli_tests";
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& content) {
  auto path = work_dir() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, std::string* captured = nullptr) {
  static int counter = 0;
  auto out_path = work_dir() / ("out_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(SACP_CLI_PATH) + " " + args + " > " +
                    out_path.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  if (captured) *captured = slurp(out_path);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kConfig = R"({
  "dataset": {"name": "lin", "source": "synthetic", "generator": "linear",
              "n": 300, "d": 3, "noise": 1.0},
  "task": "regression",
  "models": [{"kind": "ols"}, {"kind": "ridge", "lambda": 2.0}],
  "alphas": [0.1],
  "seeds": [1, 2],
  "split": {"train": 0.6, "cal": 0.2, "test": 0.2},
  "grid_size": 101,
  "threads": 1,
  "methods": [{"name": "sacp"}, {"name": "cr"}, {"name": "wagg"}]
})";

// results.csv with the timing column stripped
std::string stable_results(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    auto cut = line.rfind(',');
    out += line.substr(0, cut);
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("run: valid config produces both outputs deterministically") {
  auto cfg = write_file("good.json", kConfig);
  auto out1 = work_dir() / "run1";
  auto out2 = work_dir() / "run2";
  CHECK(run_cli("run --config " + cfg.string() + " --out " + out1.string()) == 0);
  CHECK(run_cli("run --config " + cfg.string() + " --out " + out2.string()) == 0);
  REQUIRE(fs::exists(out1 / "results.csv"));
  REQUIRE(fs::exists(out1 / "summary.json"));
  CHECK(stable_results(out1 / "results.csv") ==
        stable_results(out2 / "results.csv"));
  CHECK(slurp(out1 / "summary.json") == slurp(out2 / "summary.json"));
}

TEST_CASE("run: explicit flags override the config file") {
  auto cfg = write_file("override.json", kConfig);
  auto out = work_dir() / "override_out";
  CHECK(run_cli("run --config " + cfg.string() + " --methods sacp,split" +
                " --alpha 0.2 --seed 5 --grid-size 51 --out " + out.string()) ==
        0);
  std::ifstream in(out / "results.csv");
  std::string line;
  std::getline(in, line);  // header
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    CHECK(line.find(",0.2,5,") != std::string::npos);  // alpha and seed
    bool known = line.find("lin,sacp,") == 0 || line.find("lin,split,") == 0;
    CHECK(known);
  }
  CHECK(rows == 2);  // two methods, one alpha, one seed
}

TEST_CASE("run: bad split fractions exit with the configuration code") {
  std::string broken = kConfig;
  broken.replace(broken.find("\"train\": 0.6"), 12, "\"train\": 0.5");
  auto cfg = write_file("badsplit.json", broken);
  std::string msg;
  CHECK(run_cli("run --config " + cfg.string(), &msg) == 2);
  CHECK(msg.find("fractions") != std::string::npos);
}

TEST_CASE("run: missing data csv exits with the ingestion code") {
  auto cfg = write_file("missing.json", R"({
    "dataset": {"name": "x", "source": "csv", "path": "/nonexistent/data.csv"},
    "task": "regression",
    "models": [{"kind": "ols"}],
    "alphas": [0.1], "seeds": [1], "threads": 1,
    "methods": [{"name": "sacp"}]
  })");
  CHECK(run_cli("run --config " + cfg.string()) == 3);
}

TEST_CASE("validate: full suite passes") {
  auto report = work_dir() / "report.json";
  CHECK(run_cli("validate all --seed 7 --out " + report.string()) == 0);
  auto text = slurp(report);
  CHECK(text.find("rank_uniformity") != std::string::npos);
  CHECK(text.find("worst_case_bound") != std::string::npos);
}

TEST_CASE("validate: precondition violations exit with code 2") {
  CHECK(run_cli("validate bound --alpha 0.01") == 2);
  CHECK(run_cli("validate nosuchsuite") == 2);
}

TEST_CASE("validate: the negative control fails with code 1") {
  CHECK(run_cli("validate uniformity --negative-control --trials 4000") == 1);
}

TEST_CASE("predict: K=1 listing matches split conformal") {
  // 8 calibration scores; alpha=0.2 puts the quantile at the maximum (0.8)
  auto calib = write_file("p_calib.csv",
                          "model_1\n0.1\n0.2\n0.3\n0.4\n0.5\n0.6\n0.7\n0.8\n");
  auto test = write_file("p_test.csv",
                         "test_id,candidate,model_1\n"
                         "t0,a,0.75\nt0,b,0.85\nt1,a,0.05\nt1,b,2.0\n");
  auto labels = write_file("p_labels.csv", "test_id,label\nt0,a\nt1,b\n");
  std::string out;
  CHECK(run_cli("predict --calib " + calib.string() + " --test " + test.string() +
                    " --labels " + labels.string() + " --method sacp --alpha 0.2",
                &out) == 0);
  CHECK(out.find("t0,a") != std::string::npos);
  CHECK(out.find("t0,b") == std::string::npos);   // 0.85 > 0.8
  CHECK(out.find("t1,a") != std::string::npos);
  CHECK(out.find("t1,b") == std::string::npos);
  CHECK(out.find("coverage=0.500000,avg_length=1.000000") != std::string::npos);
}

TEST_CASE("predict: sacp++ is at least as short as sacp") {
  std::string calib_text = "model_1,model_2\n";
  std::string test_text = "test_id,candidate,model_1,model_2\n";
  char buf[96];
  unsigned state = 12345;
  auto next = [&] {
    state = state * 1103515245u + 12345u;
    return double(state % 1000) / 1000.0 + 0.01;
  };
  for (int i = 0; i < 40; ++i) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f\n", next(), next() * 3.0);
    calib_text += buf;
  }
  for (int t = 0; t < 8; ++t)
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof(buf), "t%d,c%d,%.4f,%.4f\n", t, c, next(),
                    next() * 3.0);
      test_text += buf;
    }
  std::string labels_text = "test_id,label\n";
  for (int t = 0; t < 8; ++t) labels_text += "t" + std::to_string(t) + ",c0\n";

  auto calib = write_file("pp_calib.csv", calib_text);
  auto test = write_file("pp_test.csv", test_text);
  auto labels = write_file("pp_labels.csv", labels_text);

  auto avg_length = [&](const std::string& method) {
    std::string out;
    REQUIRE(run_cli("predict --calib " + calib.string() + " --test " +
                        test.string() + " --labels " + labels.string() +
                        " --method " + method + " --alpha 0.2",
                    &out) == 0);
    auto pos = out.find("avg_length=");
    REQUIRE(pos != std::string::npos);
    return std::stod(out.substr(pos + 11));
  };
  CHECK(avg_length("sacp++") <= avg_length("sacp"));
}

TEST_CASE("predict: majority vote over two disjoint models is empty") {
  auto calib = write_file("cm_calib.csv", "model_1,model_2\n0.5,0.5\n0.5,0.5\n"
                                          "0.5,0.5\n0.5,0.5\n0.5,0.5\n");
  // candidate x accepted only by model 1, candidate y only by model 2
  auto test = write_file("cm_test.csv",
                         "test_id,candidate,model_1,model_2\n"
                         "t,x,0.1,9.0\nt,y,9.0,0.1\n");
  std::string out;
  CHECK(run_cli("predict --calib " + calib.string() + " --test " + test.string() +
                    " --method cm --alpha 0.2",
                &out) == 0);
  CHECK(out.find("t,x") == std::string::npos);
  CHECK(out.find("t,y") == std::string::npos);
}

TEST_CASE("predict: broken input exits with the ingestion code") {
  auto test = write_file("q_test.csv", "test_id,candidate,model_1\nt,a,1\n");
  CHECK(run_cli("predict --calib /nonexistent.csv --test " + test.string()) == 3);
}
