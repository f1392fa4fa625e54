// Command-line front end for the coupling laboratory.
//
// Exit codes: 0 success, 2 invalid config/arguments, 3 a checked bound
// failed, 1 internal error. Artifacts land in --out as
// <subcommand>-<label>.{csv,json}; --fixed-label makes them byte-stable.

#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rclab/experiment.hpp"

namespace {

int env_workers() {
  const char* env = std::getenv("RCLAB_WORKERS");
  if (!env) return 1;
  const int w = std::atoi(env);
  return w > 0 ? w : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "rclab: steered reflection couplings of overdamped Langevin dynamics,\n"
      "with closed-form KL/Renyi bounds checked against Monte Carlo estimates."};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  std::string out_dir = ".";
  std::string fixed_label;
  std::vector<std::string> overrides;
  int workers = 0;

  app.add_option("--config", config_path, "JSON config file (built-in defaults if omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides,
                 "Override one config entry, e.g. --set certificate.R=2 "
                 "--set x0=[1,0] (repeatable; value parses as JSON, else string)");
  app.add_option("--workers", workers,
                 "Worker threads (default: RCLAB_WORKERS env var, else 1); "
                 "results are bit-identical for any value");
  app.add_option("--fixed-label", fixed_label,
                 "Use this artifact label and suppress timestamp/runtime fields "
                 "(byte-stable artifacts for golden tests)");
  app.add_option("--out", out_dir, "Output directory for artifacts");
  app.set_version_flag("--version", "rclab 0.1.0");

  app.add_subcommand("constants", "Closed-form schedule constants and divergence bounds");
  app.add_subcommand("schedule-verify", "Quadrature self-check of the schedule identities");
  app.add_subcommand("potential-check", "Sampled verification of the (m, M, R) certificate");
  app.add_subcommand("simulate", "Coupled trajectory statistics and run report");
  app.add_subcommand("bounds", "Simulate and check kl_mc <= kl_theorem + 3 SE");
  app.add_subcommand("renyi", "Simulate and check Renyi estimates against the bounds");
  app.add_subcommand("harnack", "Endpoint sampling and log/power Harnack duality checks");
  app.add_subcommand("all", "Full pipeline; one artifact pair per stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  rclab::RunOptions opts;
  opts.subcommand = app.get_subcommands().front()->get_name();
  opts.config_path = config_path;
  opts.overrides = overrides;
  opts.out_dir = out_dir;
  opts.label = fixed_label;
  opts.workers = workers > 0 ? workers : env_workers();
  return rclab::run_experiment(opts);
}
