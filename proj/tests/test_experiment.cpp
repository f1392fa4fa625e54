#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "rclab/experiment.hpp"
#include "rclab/report.hpp"
#include "rclab/schedule.hpp"

using namespace rclab;
namespace fs = std::filesystem;

namespace {

// Small, fast experiment: 64 paths, 100 steps, d = 1 double well.
const char* kSmallConfig = R"({
  "T": 0.1,
  "dt": 0.001,
  "n_paths": 64,
  "eps_couple": 0.005,
  "bootstrap_resamples": 50,
  "certificate_pairs": 2000,
  "harnack": {"n_paths": 200}
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rclab_exp_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config parsing: empty document yields the documented defaults") {
  const auto [cfg, echo] = parse_experiment_config("{}", {});
  CHECK(cfg.potential_name == "double_well");
  CHECK(cfg.dim == 1);
  CHECK(cfg.certificate.m == 0.25);
  CHECK(cfg.certificate.M == 2.0);
  CHECK(cfg.certificate.R == 1.5);
  CHECK(cfg.x0 == std::vector<double>{0.5});
  CHECK(cfg.x0_prime == std::vector<double>{-0.5});
  CHECK(cfg.T == 2.0);
  CHECK(cfg.dt == 1e-3);
  CHECK(cfg.n_paths == 10000);
  CHECK(cfg.seed == 1);
  CHECK(cfg.eps_couple == 0.0);
  CHECK(cfg.grid_stride == 10);
  CHECK(cfg.q_list == std::vector<double>{1.1, 2.0, 4.0});
  CHECK(cfg.run_x_prime);
  CHECK(cfg.bootstrap_resamples == 1000);
  CHECK(cfg.harnack.q_prime == 2.0);
  CHECK(cfg.harnack.phi == "tanh");
  CHECK(cfg.harnack.phi_power == "two_plus_tanh");
  CHECK(echo == "{}");
}

TEST_CASE("config parsing: dotted overrides with JSON and raw-string values") {
  const auto [cfg, echo] = parse_experiment_config(
      "{\"T\": 1.0}",
      {"certificate.R=2", "x0=[1,0]", "x0_prime=[-1,0]", "potential.name=quadratic",
       "potential.dim=2", "potential.parameters.kappa=0.5", "n_paths=500",
       "harnack.phi=one"});
  CHECK(cfg.T == 1.0);
  CHECK(cfg.certificate.R == 2.0);
  CHECK(cfg.x0 == std::vector<double>{1.0, 0.0});
  CHECK(cfg.x0_prime == std::vector<double>{-1.0, 0.0});
  CHECK(cfg.potential_name == "quadratic");
  CHECK(cfg.dim == 2);
  CHECK(cfg.potential_parameters.at("kappa") == 0.5);
  CHECK(cfg.n_paths == 500);
  CHECK(cfg.harnack.phi == "one");
  // The echo is the merged document, so overrides are visible in artifacts.
  const auto doc = nlohmann::json::parse(echo);
  CHECK(doc["certificate"]["R"] == 2.0);
  CHECK(doc["potential"]["name"] == "quadratic");
}

TEST_CASE("config parsing: unknown keys are rejected at every level") {
  CHECK_THROWS_AS((void)parse_experiment_config("{\"bogus\": 1}", {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      (void)parse_experiment_config("{\"potential\": {\"name\": \"quadratic\", \"weird\": 1}}", {}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)parse_experiment_config("{\"certificate\": {\"r\": 1}}", {}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)parse_experiment_config("{\"harnack\": {\"q\": 2}}", {}),
      std::invalid_argument);
  CHECK_THROWS_AS((void)parse_experiment_config("{}", {"bogus=1"}),
                  std::invalid_argument);
}

TEST_CASE("config parsing: malformed input is a usage error") {
  CHECK_THROWS_AS((void)parse_experiment_config("{not json", {}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)parse_experiment_config("[1, 2]", {}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)parse_experiment_config("{}", {"noequals"}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)parse_experiment_config("{}", {"=5"}),
                  std::invalid_argument);
  // Type mismatches surface as usage errors too.
  CHECK_THROWS_AS((void)parse_experiment_config("{\"T\": \"late\"}", {}),
                  std::invalid_argument);
}

TEST_CASE("run_experiment: usage errors exit 2 and leave an error artifact") {
  TempDir dir("usage");
  RunOptions opts;
  opts.subcommand = "frobnicate";
  opts.out_dir = dir.str();
  opts.label = "t1";
  CHECK(run_experiment(opts) == 2);
  CHECK(fs::exists(dir.path / "frobnicate-t1-error.json"));

  opts.subcommand = "constants";
  opts.config_path = (dir.path / "missing.json").string();
  CHECK(run_experiment(opts) == 2);
  CHECK(fs::exists(dir.path / "constants-t1-error.json"));

  opts.config_path.clear();
  opts.workers = 0;
  CHECK(run_experiment(opts) == 2);
}

TEST_CASE("run_experiment: constants artifacts match the in-process closed forms") {
  TempDir dir("constants");
  RunOptions opts;
  opts.subcommand = "constants";
  opts.config_json = kSmallConfig;
  opts.out_dir = dir.str();
  opts.label = "gold";
  REQUIRE(run_experiment(opts) == 0);

  const std::string csv = read_text_file((dir.path / "constants-gold.csv").string());
  const auto [cfg, echo] = parse_experiment_config(kSmallConfig, {});
  const ScheduleParams sp = make_schedule(cfg.certificate, cfg.T, 1.0);
  const BoundReport br = make_bound_report(sp, cfg.q_list);
  const std::string expected_row =
      format_double(sp.m) + "," + format_double(sp.M) + "," + format_double(sp.R) +
      "," + format_double(sp.T) + "," + format_double(sp.dist) + "," +
      format_double(sp.nu) + "," + format_double(sp.c0) + "," + format_double(sp.c1) +
      "," + format_double(sp.m_xx) + "," + format_double(br.j_value) + "," +
      format_double(br.c_of_T) + "," + format_double(br.kl_bound) + "," +
      format_double(br.alpha) + "," + format_double(br.beta) + "\n";
  CHECK(csv ==
        "m,M,R,T,dist,nu,c0,c1,m_xx,j_value,c_of_T,kl_bound,alpha,beta\n" + expected_row);

  const auto body =
      nlohmann::json::parse(read_text_file((dir.path / "constants-gold.json").string()));
  CHECK(body["subcommand"] == "constants");
  CHECK(body["label"] == "gold");
  CHECK(body["kl_bound"].get<double>() == br.kl_bound);
  CHECK_FALSE(body.contains("timing"));  // fixed label suppresses runtimes
  CHECK(body["config"]["n_paths"] == 64);
}

TEST_CASE("run_experiment: timestamp labels keep the timing object") {
  TempDir dir("timing");
  RunOptions opts;
  opts.subcommand = "constants";
  opts.config_json = kSmallConfig;
  opts.out_dir = dir.str();
  opts.label = "";  // timestamped
  REQUIRE(run_experiment(opts) == 0);
  bool found = false;
  for (const auto& entry : fs::directory_iterator(dir.path)) {
    if (entry.path().extension() == ".json") {
      const auto body = nlohmann::json::parse(read_text_file(entry.path().string()));
      CHECK(body.contains("timing"));
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("run_experiment: simulate artifacts are byte-stable across workers") {
  TempDir d1("w1"), d3("w3");
  RunOptions opts;
  opts.subcommand = "simulate";
  opts.config_json = kSmallConfig;
  opts.label = "stable";

  opts.out_dir = d1.str();
  opts.workers = 1;
  REQUIRE(run_experiment(opts) == 0);
  opts.out_dir = d3.str();
  opts.workers = 3;
  REQUIRE(run_experiment(opts) == 0);

  for (const char* name : {"simulate-stable.csv", "simulate-stable.json"}) {
    const std::string a = read_text_file((d1.path / name).string());
    const std::string b = read_text_file((d3.path / name).string());
    CHECK(a == b);
    CHECK_FALSE(a.empty());
  }
}

TEST_CASE("run_experiment: a failing check exits 3 with the failure recorded") {
  TempDir dir("fail");
  RunOptions opts;
  opts.subcommand = "potential-check";
  opts.config_json = kSmallConfig;
  // The double well expands pairs straddling the well bottoms, so m = 1
  // at R = 1 is a false certificate and the margin check must fail.
  opts.overrides = {"certificate.m=1", "certificate.M=2", "certificate.R=1"};
  opts.out_dir = dir.str();
  opts.label = "t3";
  CHECK(run_experiment(opts) == 3);
  CHECK(fs::exists(dir.path / "potential-check-t3.json"));
  const auto err = nlohmann::json::parse(
      read_text_file((dir.path / "potential-check-t3-error.json").string()));
  CHECK(err["exit_code"] == 3);
  REQUIRE(err.contains("failures"));
  CHECK(err["failures"].size() > 0);
}

TEST_CASE("run_experiment: the all pipeline writes one artifact pair per stage") {
  TempDir dir("all");
  RunOptions opts;
  opts.subcommand = "all";
  opts.config_json = kSmallConfig;
  opts.out_dir = dir.str();
  opts.label = "full";
  opts.workers = 2;
  REQUIRE(run_experiment(opts) == 0);
  for (const char* sub : {"constants", "schedule-verify", "potential-check", "simulate",
                          "bounds", "renyi", "harnack"}) {
    CHECK(fs::exists(dir.path / (std::string(sub) + "-full.csv")));
    CHECK(fs::exists(dir.path / (std::string(sub) + "-full.json")));
  }
  // Spot-check the bounds stage really verified the KL inequality.
  const auto body = nlohmann::json::parse(
      read_text_file((dir.path / "bounds-full.json").string()));
  CHECK(body["pass"].get<bool>());
  CHECK(body["kl_mc"].get<double>() <=
        body["kl_theorem"].get<double>() + 3.0 * body["kl_se"].get<double>() + 1e-15);
}
