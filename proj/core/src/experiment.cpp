#include "rclab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "rclab/divergence.hpp"
#include "rclab/report.hpp"
#include "rclab/schedule.hpp"

namespace rclab {
namespace {

using nlohmann::json;

// Endpoint-noise stream salts: the x and x' sample sets must never share
// a PRNG lane under one seed.
constexpr std::uint64_t kSaltX = 0;
constexpr std::uint64_t kSaltXPrime = std::uint64_t{1} << 32;

// Non-finite doubles have no JSON number form; spell them out instead of
// dropping to null.
json json_num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

json json_vec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(json_num(x));
  return a;
}

std::string timestamp_label() {
  const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys,
                    const char* where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key.path=value, got '" + kv + "'");
  }
  const std::string path = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) parsed = value;  // bare strings need no quotes

  json* cur = &doc;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) throw std::invalid_argument("--set: empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(parsed);
      return;
    }
    cur = &(*cur)[key];
    pos = dot + 1;
  }
}

TestFunction make_test_function(const std::string& name) {
  if (name == "tanh") {
    return [](std::span<const double> x) { return std::tanh(x[0]); };
  }
  if (name == "one") {
    return [](std::span<const double>) { return 1.0; };
  }
  if (name == "two_plus_tanh") {
    return [](std::span<const double> x) { return 2.0 + std::tanh(x[0]); };
  }
  throw std::invalid_argument("config: unknown test function '" + name +
                              "' (known: tanh, one, two_plus_tanh)");
}

json schedule_json(const ScheduleParams& sp) {
  return json{{"T", sp.T},         {"nu", sp.nu},   {"c0", sp.c0}, {"c1", sp.c1},
              {"dist", sp.dist},   {"m_xx", sp.m_xx}, {"m", sp.m},   {"M", sp.M},
              {"R", sp.R}};
}

struct RunnerOut {
  CsvTable csv;
  json body = json::object();
  std::vector<std::string> failures;
};

struct Context {
  const ExperimentConfig& cfg;
  int workers;
  std::uint64_t simulate_runtime_known = 0;  // set if a sim ran (for timing)
  double simulate_seconds = 0.0;
  std::optional<SimResult> sim;  // shared across simulate/bounds/renyi in `all`

  const SimResult& get_sim() {
    if (!sim) {
      const ScheduleParams sp = schedule();
      sim = simulate(cfg.make_sim_config(workers, /*store_endpoints=*/false), sp);
      simulate_runtime_known = 1;
      simulate_seconds = sim->elapsed_seconds;
    }
    return *sim;
  }

  ScheduleParams schedule() const {
    SimConfig sc = cfg.make_sim_config(workers, false);
    sc.validate();
    return make_schedule(cfg.certificate, cfg.T, sc.dist());
  }
};

RunnerOut run_constants(Context& ctx) {
  const ScheduleParams sp = ctx.schedule();
  const BoundReport br = make_bound_report(sp, ctx.cfg.q_list);
  RunnerOut out;
  out.csv.header = {"m", "M", "R", "T", "dist", "nu", "c0", "c1", "m_xx",
                    "j_value", "c_of_T", "kl_bound", "alpha", "beta"};
  out.csv.columns = {{sp.m},      {sp.M},       {sp.R},        {sp.T},
                     {sp.dist},   {sp.nu},      {sp.c0},       {sp.c1},
                     {sp.m_xx},   {br.j_value}, {br.c_of_T},   {br.kl_bound},
                     {br.alpha},  {br.beta}};
  json renyi = json::object();
  for (const auto& [q, v] : br.renyi_bounds) renyi[format_double(q)] = json_num(v);
  out.body = {{"schedule", schedule_json(sp)},
              {"kl_bound", json_num(br.kl_bound)},
              {"renyi_bounds", renyi},
              {"alpha", json_num(br.alpha)},
              {"beta", json_num(br.beta)},
              {"c_of_T", json_num(br.c_of_T)},
              {"j_value", json_num(br.j_value)}};
  return out;
}

RunnerOut run_schedule_verify(Context& ctx) {
  const ScheduleParams sp = ctx.schedule();
  const ScheduleVerifyReport rep = verify_schedule_identities(sp);
  RunnerOut out;
  out.csv.header = {"constraint_error", "kl_identity_rel_error", "j_moment_rel_error",
                    "worst_moment_excess", "pass"};
  out.csv.columns = {{rep.constraint_error},
                     {rep.kl_identity_rel_error},
                     {rep.j_moment_rel_error},
                     {rep.worst_moment_excess},
                     {rep.pass ? 1.0 : 0.0}};
  out.body = {{"schedule", schedule_json(sp)},
              {"constraint_error", json_num(rep.constraint_error)},
              {"kl_identity_rel_error", json_num(rep.kl_identity_rel_error)},
              {"j_moment_rel_error", json_num(rep.j_moment_rel_error)},
              {"worst_moment_excess", json_num(rep.worst_moment_excess)},
              {"pass", rep.pass}};
  if (!rep.pass) out.failures.push_back("schedule identities violated the tolerances");
  return out;
}

RunnerOut run_potential_check(Context& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const PotentialSpec spec = cfg.make_potential_spec();
  const double radius = cfg.certificate_radius > 0.0 ? cfg.certificate_radius
                                                     : default_check_radius(cfg.certificate);
  const CertificateReport rep =
      verify_certificate(spec, cfg.certificate, cfg.certificate_pairs, radius, cfg.seed);
  RunnerOut out;
  out.csv.header = {"pass", "worst_near_margin", "worst_far_margin", "n_pairs"};
  out.csv.columns = {{rep.pass ? 1.0 : 0.0},
                     {rep.worst_near_margin},
                     {rep.worst_far_margin},
                     {static_cast<double>(rep.n_pairs)}};
  out.body = {{"pass", rep.pass},
              {"worst_near_margin", json_num(rep.worst_near_margin)},
              {"worst_far_margin", json_num(rep.worst_far_margin)},
              {"n_pairs", rep.n_pairs},
              {"seed", rep.seed},
              {"radius", json_num(radius)},
              {"potential", spec.name},
              {"dim", spec.dim}};
  if (!rep.pass) out.failures.push_back("certificate margins fell below -1e-9");
  return out;
}

RunnerOut run_simulate(Context& ctx) {
  const ScheduleParams sp = ctx.schedule();
  const SimResult& res = ctx.get_sim();
  const TrajectoryStats& ts = res.stats;
  const Estimate kl = kl_girsanov_estimate(ts, sp);

  RunnerOut out;
  std::vector<double> env(ts.grid.size());
  for (std::size_t i = 0; i < ts.grid.size(); ++i) env[i] = envelope(sp, ts.grid[i]);
  out.csv.header = {"t", "mean_abs_z", "se_abs_z", "mean_sqrt_f_z",
                    "se_sqrt_f_z", "mean_f_z", "envelope"};
  out.csv.columns = {ts.grid,         ts.mean_abs_z, ts.se_abs_z, ts.mean_sqrt_f_z,
                     ts.se_sqrt_f_z,  ts.mean_f_z,   env};
  out.body = {{"schedule", schedule_json(sp)},
              {"seed", ctx.cfg.seed},
              {"n_paths", ts.n_paths},
              {"coupled_fraction_at_T", json_num(ts.coupled_fraction_at_T)},
              {"max_sup_z", json_num(ts.max_sup_z)},
              {"girsanov_integral", json_num(ts.girsanov_mean)},
              {"girsanov_se", json_num(ts.girsanov_se)},
              {"kl_mc", json_num(kl.value)},
              {"kl_se", json_num(kl.se)},
              {"diverged_paths", ts.diverged_paths},
              {"failed", ts.failed},
              {"eps_couple", json_num(ctx.cfg.make_sim_config(ctx.workers, false).eps_couple_effective())},
              {"grid_points", static_cast<std::int64_t>(ts.grid.size())}};
  if (ts.failed) out.failures.push_back("more than 0.1% of paths diverged");
  return out;
}

RunnerOut run_bounds(Context& ctx) {
  const ScheduleParams sp = ctx.schedule();
  const SimResult& res = ctx.get_sim();
  const Estimate kl = kl_girsanov_estimate(res.stats, sp);
  const double theorem = kl_bound(sp);
  const double margin = theorem + 3.0 * kl.se - kl.value;
  const bool pass = margin >= 0.0 && !res.stats.failed;

  RunnerOut out;
  out.csv.header = {"T", "dist", "kl_mc", "kl_se", "kl_theorem", "margin", "pass"};
  out.csv.columns = {{sp.T},      {sp.dist},  {kl.value}, {kl.se},
                     {theorem},   {margin},   {pass ? 1.0 : 0.0}};
  out.body = {{"schedule", schedule_json(sp)},
              {"kl_mc", json_num(kl.value)},
              {"kl_se", json_num(kl.se)},
              {"kl_theorem", json_num(theorem)},
              {"margin", json_num(margin)},
              {"coupled_fraction_at_T", json_num(res.stats.coupled_fraction_at_T)},
              {"pass", pass}};
  if (!pass) out.failures.push_back("kl_mc exceeded kl_theorem + 3 SE (or the run failed)");
  return out;
}

RunnerOut run_renyi(Context& ctx) {
  const ScheduleParams sp = ctx.schedule();
  const SimResult& res = ctx.get_sim();
  const DivergenceReport rep = make_divergence_report(res, sp, ctx.cfg.q_list, ctx.cfg.seed,
                                                      ctx.cfg.bootstrap_resamples);

  RunnerOut out;
  std::vector<double> qs, mc, lo, hi, thm;
  json detail = json::object();
  for (const auto& [q, est] : rep.renyi_mc) {
    const double theorem = rep.renyi_theorem.at(q);
    qs.push_back(q);
    mc.push_back(est.value);
    lo.push_back(est.ci_lo);
    hi.push_back(est.ci_hi);
    thm.push_back(theorem);
    detail[format_double(q)] = {{"renyi_mc", json_num(est.value)},
                                {"ci_lo", json_num(est.ci_lo)},
                                {"ci_hi", json_num(est.ci_hi)},
                                {"renyi_theorem", json_num(theorem)},
                                {"heavy_tail", est.heavy_tail}};
    if (est.ci_lo > theorem) {
      out.failures.push_back("renyi_mc at q = " + format_double(q) +
                             " exceeded the theorem bound beyond its CI");
    }
  }
  out.csv.header = {"q", "renyi_mc", "ci_lo", "ci_hi", "renyi_theorem"};
  out.csv.columns = {qs, mc, lo, hi, thm};
  out.body = {{"schedule", schedule_json(sp)},
              {"kl_mc", json_num(rep.kl_mc.value)},
              {"kl_se", json_num(rep.kl_mc.se)},
              {"kl_theorem", json_num(rep.kl_theorem)},
              {"renyi", detail},
              {"n_paths", rep.n_paths},
              {"notes", rep.notes},
              {"bootstrap_resamples", ctx.cfg.bootstrap_resamples}};
  return out;
}

RunnerOut run_harnack(Context& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const ScheduleParams sp = ctx.schedule();
  const PotentialSpec spec = cfg.make_potential_spec();
  const std::int64_t n = cfg.harnack.n_paths > 0 ? cfg.harnack.n_paths : cfg.n_paths;
  const std::vector<double> sx = sample_endpoints(spec, cfg.x0, cfg.T, cfg.dt, n, cfg.seed,
                                                  kSaltX, ctx.workers);
  const std::vector<double> sxp = sample_endpoints(spec, cfg.x0_prime, cfg.T, cfg.dt, n,
                                                   cfg.seed, kSaltXPrime, ctx.workers);
  const HarnackReport log_rep =
      log_harnack_check(sx, sxp, cfg.dim, sp, make_test_function(cfg.harnack.phi));
  const HarnackReport pow_rep = power_harnack_check(
      sx, sxp, cfg.dim, sp, make_test_function(cfg.harnack.phi_power), cfg.harnack.q_prime);

  auto to_json = [](const HarnackReport& r) {
    return json{{"flavor", r.flavor},     {"q_prime", json_num(r.q_prime)},
                {"lhs", json_num(r.lhs)}, {"lhs_se", json_num(r.lhs_se)},
                {"rhs", json_num(r.rhs)}, {"rhs_se", json_num(r.rhs_se)},
                {"margin", json_num(r.margin)}, {"constant", json_num(r.constant)},
                {"log_constant", json_num(r.log_constant)}, {"pass", r.pass}};
  };
  RunnerOut out;
  out.csv.header = {"q_prime", "lhs", "lhs_se", "rhs", "rhs_se", "margin", "pass"};
  out.csv.columns = {{log_rep.q_prime, pow_rep.q_prime}, {log_rep.lhs, pow_rep.lhs},
                     {log_rep.lhs_se, pow_rep.lhs_se},   {log_rep.rhs, pow_rep.rhs},
                     {log_rep.rhs_se, pow_rep.rhs_se},   {log_rep.margin, pow_rep.margin},
                     {log_rep.pass ? 1.0 : 0.0, pow_rep.pass ? 1.0 : 0.0}};
  out.body = {{"schedule", schedule_json(sp)},
              {"n_endpoint_paths", n},
              {"phi", cfg.harnack.phi},
              {"phi_power", cfg.harnack.phi_power},
              {"log_harnack", to_json(log_rep)},
              {"power_harnack", to_json(pow_rep)}};
  if (!log_rep.pass) out.failures.push_back("log-Harnack margin fell below -3 SE");
  if (!pow_rep.pass) out.failures.push_back("power-Harnack margin fell below -3 SE");
  return out;
}

}  // namespace

PotentialSpec ExperimentConfig::make_potential_spec() const {
  return make_potential(potential_name, potential_parameters, dim);
}

SimConfig ExperimentConfig::make_sim_config(int workers, bool store_endpoints) const {
  SimConfig sc;
  sc.potential = make_potential_spec();
  sc.certificate = certificate;
  sc.x0 = x0;
  sc.x0_prime = x0_prime;
  sc.T = T;
  sc.dt = dt;
  sc.n_paths = n_paths;
  sc.seed = seed;
  sc.eps_couple = eps_couple;
  sc.grid_stride = grid_stride;
  sc.run_x_prime = run_x_prime;
  sc.store_endpoints = store_endpoints;
  sc.workers = workers;
  return sc;
}

std::pair<ExperimentConfig, std::string> parse_experiment_config(
    const std::string& json_text, const std::vector<std::string>& overrides) {
  try {
    json doc = json::parse(json_text);
    if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
    for (const std::string& kv : overrides) apply_override(doc, kv);

    reject_unknown(doc,
                   {"potential", "certificate", "x0", "x0_prime", "T", "dt", "n_paths",
                    "seed", "eps_couple", "grid_stride", "q_list", "run_x_prime",
                    "bootstrap_resamples", "certificate_pairs", "certificate_radius",
                    "harnack"},
                   "top level");

    ExperimentConfig cfg;
    if (doc.contains("potential")) {
      const json& p = doc["potential"];
      reject_unknown(p, {"name", "dim", "parameters"}, "potential");
      cfg.potential_name = p.value("name", cfg.potential_name);
      cfg.dim = p.value("dim", cfg.dim);
      if (p.contains("parameters")) {
        cfg.potential_parameters.clear();
        for (auto it = p["parameters"].begin(); it != p["parameters"].end(); ++it) {
          cfg.potential_parameters[it.key()] = it.value().get<double>();
        }
      }
    }
    if (doc.contains("certificate")) {
      const json& c = doc["certificate"];
      reject_unknown(c, {"m", "M", "R"}, "certificate");
      cfg.certificate.m = c.value("m", cfg.certificate.m);
      cfg.certificate.M = c.value("M", cfg.certificate.M);
      cfg.certificate.R = c.value("R", cfg.certificate.R);
    }
    if (doc.contains("x0")) cfg.x0 = doc["x0"].get<std::vector<double>>();
    if (doc.contains("x0_prime")) cfg.x0_prime = doc["x0_prime"].get<std::vector<double>>();
    cfg.T = doc.value("T", cfg.T);
    cfg.dt = doc.value("dt", cfg.dt);
    cfg.n_paths = doc.value("n_paths", cfg.n_paths);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.eps_couple = doc.value("eps_couple", cfg.eps_couple);
    cfg.grid_stride = doc.value("grid_stride", cfg.grid_stride);
    if (doc.contains("q_list")) cfg.q_list = doc["q_list"].get<std::vector<double>>();
    cfg.run_x_prime = doc.value("run_x_prime", cfg.run_x_prime);
    cfg.bootstrap_resamples = doc.value("bootstrap_resamples", cfg.bootstrap_resamples);
    cfg.certificate_pairs = doc.value("certificate_pairs", cfg.certificate_pairs);
    cfg.certificate_radius = doc.value("certificate_radius", cfg.certificate_radius);
    if (doc.contains("harnack")) {
      const json& h = doc["harnack"];
      reject_unknown(h, {"q_prime", "phi", "phi_power", "n_paths"}, "harnack");
      cfg.harnack.q_prime = h.value("q_prime", cfg.harnack.q_prime);
      cfg.harnack.phi = h.value("phi", cfg.harnack.phi);
      cfg.harnack.phi_power = h.value("phi_power", cfg.harnack.phi_power);
      cfg.harnack.n_paths = h.value("n_paths", cfg.harnack.n_paths);
    }
    return {std::move(cfg), doc.dump(2)};
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

int run_experiment(const RunOptions& opts) {
  const std::string label = opts.label.empty() ? timestamp_label() : opts.label;
  const bool fixed = !opts.label.empty();
  const auto artifact_path = [&](const std::string& sub, const char* ext) {
    return opts.out_dir + "/" + sub + "-" + label + ext;
  };
  const auto write_error = [&](int code, const std::string& message,
                               const std::vector<std::string>& failures) {
    try {
      std::filesystem::create_directories(opts.out_dir);
      json err{{"subcommand", opts.subcommand},
               {"label", label},
               {"exit_code", code},
               {"message", message}};
      if (!failures.empty()) err["failures"] = failures;
      write_text_file(artifact_path(opts.subcommand, "-error.json"), err.dump(2) + "\n");
    } catch (...) {
      // The error report is best-effort; the exit code still stands.
    }
  };

  try {
    static const std::vector<std::string> kAll = {"constants",      "schedule-verify",
                                                  "potential-check", "simulate",
                                                  "bounds",          "renyi",
                                                  "harnack"};
    const bool is_all = opts.subcommand == "all";
    if (!is_all &&
        std::find(kAll.begin(), kAll.end(), opts.subcommand) == kAll.end()) {
      throw std::invalid_argument("unknown subcommand '" + opts.subcommand + "'");
    }
    if (opts.workers < 1) throw std::invalid_argument("workers must be >= 1");

    std::string config_text = opts.config_json;
    if (!opts.config_path.empty()) {
      try {
        config_text = read_text_file(opts.config_path);
      } catch (const std::runtime_error& e) {
        throw std::invalid_argument(e.what());  // a missing config is a usage error
      }
    }
    auto [cfg, echo_text] = parse_experiment_config(config_text, opts.overrides);
    const json echo = json::parse(echo_text);
    std::filesystem::create_directories(opts.out_dir);

    Context ctx{cfg, opts.workers};
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> all_failures;
    const std::vector<std::string> subs = is_all ? kAll : std::vector<std::string>{opts.subcommand};
    for (const std::string& sub : subs) {
      RunnerOut out;
      if (sub == "constants") out = run_constants(ctx);
      else if (sub == "schedule-verify") out = run_schedule_verify(ctx);
      else if (sub == "potential-check") out = run_potential_check(ctx);
      else if (sub == "simulate") out = run_simulate(ctx);
      else if (sub == "bounds") out = run_bounds(ctx);
      else if (sub == "renyi") out = run_renyi(ctx);
      else out = run_harnack(ctx);

      json body = std::move(out.body);
      body["subcommand"] = sub;
      body["label"] = label;
      body["config"] = echo;
      if (!out.failures.empty()) body["failures"] = out.failures;
      if (!fixed) {
        json timing{{"generated_at", timestamp_label()}};
        if (ctx.simulate_runtime_known) timing["simulate_seconds"] = ctx.simulate_seconds;
        timing["elapsed_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        body["timing"] = timing;
      }
      write_text_file(artifact_path(sub, ".csv"), out.csv.to_string());
      write_text_file(artifact_path(sub, ".json"), body.dump(2) + "\n");
      for (const std::string& f : out.failures) all_failures.push_back(sub + ": " + f);
    }
    if (!all_failures.empty()) {
      write_error(3, "checked criteria failed", all_failures);
      return 3;
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    write_error(2, e.what(), {});
    return 2;
  } catch (const std::exception& e) {
    write_error(1, e.what(), {});
    return 1;
  }
}

}  // namespace rclab
