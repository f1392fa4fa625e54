#pragma once

// Experiment pipeline: a single JSON config document drives every
// subcommand (constants, schedule-verify, potential-check, simulate,
// bounds, renyi, harnack, all). Each run writes a CSV and a JSON
// artifact named <subcommand>-<label>.{csv,json}; with a caller-fixed
// label the artifacts contain no timestamps or runtimes and are
// byte-identical across re-runs and worker counts.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rclab/coupling.hpp"
#include "rclab/potential.hpp"

namespace rclab {

struct HarnackConfig {
  double q_prime = 2.0;
  std::string phi = "tanh";                 // log-flavor test function
  std::string phi_power = "two_plus_tanh";  // power flavor needs phi > 0
  std::int64_t n_paths = 0;                 // 0: inherit the main n_paths
};

struct ExperimentConfig {
  std::string potential_name = "double_well";
  std::map<std::string, double> potential_parameters;
  int dim = 1;
  Certificate certificate{0.25, 2.0, 1.5};
  std::vector<double> x0{0.5};
  std::vector<double> x0_prime{-0.5};
  double T = 2.0;
  double dt = 1e-3;
  std::int64_t n_paths = 10000;
  std::uint64_t seed = 1;
  double eps_couple = 0.0;  // <= 0: simulator default
  int grid_stride = 10;
  std::vector<double> q_list{1.1, 2.0, 4.0};
  bool run_x_prime = true;
  int bootstrap_resamples = 1000;
  std::int64_t certificate_pairs = 200000;
  double certificate_radius = 0.0;  // <= 0: default check radius
  HarnackConfig harnack;

  PotentialSpec make_potential_spec() const;
  SimConfig make_sim_config(int workers, bool store_endpoints) const;
};

// Parses the config document and applies dotted-path overrides
// ("certificate.R=2", "x0=[1,0]", "potential.name=quadratic"; values
// parse as JSON when they can, else as raw strings). Unknown keys are
// rejected. Returns the typed config and the merged document's canonical
// JSON text (the echo embedded in every artifact).
std::pair<ExperimentConfig, std::string> parse_experiment_config(
    const std::string& json_text, const std::vector<std::string>& overrides);

struct RunOptions {
  std::string subcommand;
  std::string config_path;        // preferred; read at run time
  std::string config_json = "{}"; // used when config_path is empty
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  std::string label;  // empty: timestamp label, runtime fields kept
  int workers = 1;
};

// Runs one subcommand end to end. Exit codes: 0 success, 2 invalid
// config/arguments, 3 a checked bound or criterion failed, 1 internal
// error. Every nonzero exit also writes <subcommand>-<label>-error.json.
int run_experiment(const RunOptions& opts);

}  // namespace rclab
