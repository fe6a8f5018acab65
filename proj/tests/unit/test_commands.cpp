#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adp2/commands.hpp"
#include "adp2/config.hpp"
#include "adp2/errors.hpp"
#include "adp2/trace.hpp"

using namespace adp2;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "adp2_command_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// The commands print through stdout; park it in a file while they run.
class StdoutCapture {
 public:
  explicit StdoutCapture(const fs::path& path) : path_(path) {
    std::fflush(stdout);
    saved_ = dup(fileno(stdout));
    if (saved_ < 0) throw std::runtime_error("dup failed");
    if (std::freopen(path_.string().c_str(), "w", stdout) == nullptr)
      throw std::runtime_error("freopen failed");
  }
  StdoutCapture(const StdoutCapture&) = delete;
  StdoutCapture& operator=(const StdoutCapture&) = delete;
  ~StdoutCapture() { restore(); }

  std::string finish() {
    restore();
    return slurp(path_);
  }

 private:
  void restore() {
    if (saved_ < 0) return;
    std::fflush(stdout);
    dup2(saved_, fileno(stdout));
    close(saved_);
    saved_ = -1;
    std::clearerr(stdout);
  }
  fs::path path_;
  int saved_ = -1;
};

std::string run_config_text(const fs::path& dir, int seed, long T, int stride) {
  std::ostringstream ss;
  ss << R"({
  "schema_version": 1,
  "seed": )"
     << seed << R"(,
  "activation": "logical",
  "task": {"kind": "quadratic", "K": 2, "d": 2, "shard_size": 8, "gen_seed": 21},
  "graph": {"kind": "ring"},
  "train": {"eta": "auto", "B": 2, "T": )"
     << T << R"(, "probe_stride": )" << stride << R"(},
  "output": {"trace": ")"
     << (dir / "trace.csv").string() << R"(", "report": ")"
     << (dir / "report.json").string() << R"("}
})";
  return ss.str();
}

const char* kCalibratedText = R"({
  "schema_version": 1,
  "task": {"kind": "quadratic", "K": 8, "d": 2, "shard_size": 64, "clip": 1.0},
  "train": {"eta": "auto", "B": 8, "T": 2000},
  "privacy": {"eps": 5.0, "delta": 0.05, "mu": 0.5}
})";

}  // namespace

TEST_CASE("load_config applies command line overrides") {
  const fs::path dir = fresh_dir("load_config");
  const fs::path raw_path = dir / "raw.json";
  write_text(raw_path, R"({
    "schema_version": 1,
    "task": {"kind": "quadratic", "K": 2, "d": 2, "shard_size": 4},
    "train": {"eta": 0.1, "B": 2, "T": 10},
    "privacy": {"sigma": 0.25}
  })");
  const fs::path cal_path = dir / "calibrated.json";
  write_text(cal_path, kCalibratedText);

  SUBCASE("no overrides keeps the file contents") {
    const ExperimentConfig c = load_config(raw_path.string(), {});
    CHECK(c.seed == 0);
    CHECK(c.output.trace == "trace.csv");
  }

  SUBCASE("seed replaces the configured value") {
    CliOverrides o;
    o.seed = 99;
    CHECK(load_config(raw_path.string(), o).seed == 99);
  }

  SUBCASE("output prepends a directory to both files") {
    CliOverrides o;
    o.output = "out/dir";
    const ExperimentConfig c = load_config(raw_path.string(), o);
    CHECK(c.output.trace == (fs::path("out/dir") / "trace.csv").string());
    CHECK(c.output.report == (fs::path("out/dir") / "report.json").string());
  }

  SUBCASE("mu needs a calibrated privacy block") {
    CliOverrides o;
    o.mu = "0.5";
    CHECK_THROWS_WITH_AS((void)load_config(raw_path.string(), o),
                         doctest::Contains("--mu only applies"), ConfigError);
  }

  SUBCASE("mu accepts auto or a number in the open interval") {
    CliOverrides o;
    o.mu = "0.25";
    ExperimentConfig c = load_config(cal_path.string(), o);
    CHECK_FALSE(c.privacy.mu_auto);
    CHECK(c.privacy.mu == 0.25);

    o.mu = "auto";
    c = load_config(cal_path.string(), o);
    CHECK(c.privacy.mu_auto);

    o.mu = "1.5";
    CHECK_THROWS_WITH_AS((void)load_config(cal_path.string(), o),
                         doctest::Contains("--mu must be"), ConfigError);
    o.mu = "abc";
    CHECK_THROWS_WITH_AS((void)load_config(cal_path.string(), o),
                         doctest::Contains("--mu must be"), ConfigError);
  }
}

TEST_CASE("calibrate reports feasibility and returns the documented codes") {
  const fs::path dir = fresh_dir("calibrate");

  SUBCASE("a feasible fixed-mu budget passes") {
    const ExperimentConfig c = parse_config_text(kCalibratedText, "test");
    StdoutCapture cap(dir / "feasible.txt");
    const int rc = cmd_calibrate(c);
    const std::string out = cap.finish();
    CHECK(rc == 0);
    CHECK(out.find("budget is feasible") != std::string::npos);
    CHECK(out.find("sigma2      0.134173151") != std::string::npos);
    CHECK(out.find("FAIL") == std::string::npos);
  }

  SUBCASE("auto mu reports the grid point it picked") {
    ExperimentConfig c = parse_config_text(kCalibratedText, "test");
    c.privacy.mu_auto = true;
    StdoutCapture cap(dir / "auto.txt");
    const int rc = cmd_calibrate(c);
    const std::string out = cap.finish();
    CHECK(rc == 0);
    CHECK(out.find("(grid-selected)") != std::string::npos);
    CHECK(out.find("mu          0.62") != std::string::npos);
  }

  SUBCASE("an impossible budget is reported, not thrown") {
    const ExperimentConfig c = parse_config_text(R"({
      "schema_version": 1,
      "task": {"kind": "quadratic", "K": 2, "d": 1, "shard_size": 4, "clip": 1.0},
      "train": {"eta": 0.1, "B": 1, "T": 1000},
      "privacy": {"eps": 0.1, "delta": 1e-9, "mu": "auto"}
    })",
                                                 "test");
    StdoutCapture cap(dir / "infeasible.txt");
    const int rc = cmd_calibrate(c);
    const std::string out = cap.finish();
    CHECK(rc == 3);
    CHECK(out.find("budget is INFEASIBLE") != std::string::npos);
    CHECK(out.find("(closest grid point)") != std::string::npos);
    CHECK(out.find("FAIL") != std::string::npos);
  }

  SUBCASE("a config without privacy targets is rejected") {
    const ExperimentConfig c = parse_config_text(R"({
      "schema_version": 1,
      "task": {"kind": "quadratic", "K": 2, "d": 1, "shard_size": 4},
      "train": {"eta": 0.1, "B": 1, "T": 10}
    })",
                                                 "test");
    CHECK_THROWS_WITH_AS((void)cmd_calibrate(c),
                         doctest::Contains("calibrate needs a privacy block"),
                         ConfigError);
  }
}

TEST_CASE("run writes the trace and report and reruns byte for byte") {
  const fs::path dir = fresh_dir("run");
  const fs::path cfg_path = dir / "config.json";
  write_text(cfg_path, run_config_text(dir, 5, 200, 50));
  const ExperimentConfig c = load_config(cfg_path.string(), {});

  {
    StdoutCapture cap(dir / "stdout1.txt");
    CHECK(cmd_run(c) == 0);
    const std::string out = cap.finish();
    CHECK(out.find("run complete: 200 updates") != std::string::npos);
  }
  REQUIRE(fs::exists(dir / "trace.csv"));
  REQUIRE(fs::exists(dir / "report.json"));

  const ParsedTrace parsed = read_trace_csv((dir / "trace.csv").string());
  CHECK(parsed.config_hash == config_hash(c));
  CHECK(parsed.seed == 5);
  CHECK(parsed.rows.size() == 200);
  long probes = 0;
  for (const auto& r : parsed.rows)
    if (r.has_metrics) ++probes;
  CHECK(probes == 4);

  const auto doc = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["config_hash"] == config_hash(c));
  CHECK(doc["seed"] == 5);
  CHECK(doc["mode"] == "adpsgd");
  CHECK(doc["activation"] == "logical");
  CHECK(doc["task"]["K"] == 2);
  CHECK(doc["task"]["L"] == 1.0);
  CHECK(doc["privacy"].is_null());
  CHECK(doc["throughput"]["updates"] == 200);
  CHECK(doc["convergence"]["probes"].size() == 4);
  // Auto step size on a task with a known optimum fills the bound block.
  REQUIRE(doc["bound"].is_object());
  CHECK(doc["bound"]["rho"] == 0.0);
  CHECK(doc["bound"]["t_min"] == 4096.0);
  CHECK(doc["bound"]["t_at_least_t_min"] == false);

  const std::string trace_bytes = slurp(dir / "trace.csv");
  const std::string report_bytes = slurp(dir / "report.json");
  fs::remove(dir / "trace.csv");
  fs::remove(dir / "report.json");
  {
    StdoutCapture cap(dir / "stdout2.txt");
    CHECK(cmd_run(c) == 0);
    cap.finish();
  }
  CHECK(slurp(dir / "trace.csv") == trace_bytes);
  CHECK(slurp(dir / "report.json") == report_bytes);
}

TEST_CASE("compare of a trace with itself prints unit ratios") {
  const fs::path dir = fresh_dir("compare");
  const fs::path cfg_path = dir / "config.json";
  write_text(cfg_path, run_config_text(dir, 11, 100, 25));
  const ExperimentConfig c = load_config(cfg_path.string(), {});
  {
    StdoutCapture cap(dir / "run.txt");
    cmd_run(c);
  }

  const std::string trace = (dir / "trace.csv").string();
  StdoutCapture cap(dir / "compare.txt");
  const int rc = cmd_compare(trace, trace);
  const std::string out = cap.finish();
  CHECK(rc == 0);

  const auto lines = split_lines(out);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "metric,a,b,ratio");
  CHECK(lines[1].rfind("final_loss,", 0) == 0);
  CHECK(lines[2].rfind("mean_grad_norm_sq,", 0) == 0);
  for (std::size_t i = 1; i < lines.size(); ++i)
    CHECK(lines[i].substr(lines[i].rfind(',')) == ",1");
  // Logical runs spend no virtual time, so the rate columns are NaN on both
  // sides and the ratio stays pinned at one.
  CHECK(lines[3] == "wall_time,0,0,1");
  CHECK(lines[4] == "updates_per_time,nan,nan,1");
}

TEST_CASE("sweep fans out seeds and matches single runs byte for byte") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg_path = dir / "config.json";
  write_text(cfg_path, run_config_text(dir, 7, 100, 25));
  const ExperimentConfig c = load_config(cfg_path.string(), {});

  CHECK_THROWS_WITH_AS((void)cmd_sweep(c, 0), doctest::Contains("at least one run"),
                       ConfigError);

  {
    StdoutCapture cap(dir / "sweep.txt");
    const int rc = cmd_sweep(c, 3);
    const std::string out = cap.finish();
    CHECK(rc == 0);
    CHECK(out.find("seed 7:") != std::string::npos);
    CHECK(out.find("seed 9:") != std::string::npos);
  }

  CHECK_FALSE(fs::exists(dir / "trace.csv"));
  for (int s = 7; s <= 9; ++s) {
    CHECK(fs::exists(dir / ("trace_s" + std::to_string(s) + ".csv")));
    CHECK(fs::exists(dir / ("report_s" + std::to_string(s) + ".json")));
  }
  CHECK(slurp(dir / "trace_s7.csv") != slurp(dir / "trace_s8.csv"));

  // A sweep member is indistinguishable from running that seed directly.
  const std::string sweep_bytes = slurp(dir / "trace_s8.csv");
  ExperimentConfig cs = c;
  cs.seed = 8;
  cs.output.trace = (dir / "trace_s8.csv").string();
  cs.output.report = (dir / "report_s8.json").string();
  {
    StdoutCapture cap(dir / "direct.txt");
    cmd_run(cs);
  }
  CHECK(slurp(dir / "trace_s8.csv") == sweep_bytes);
}
