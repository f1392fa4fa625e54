// End-to-end acceptance gate for the coupling laboratory.
//
// Usage: rclab_acceptance <path-to-rclab-cli>
//
// Eight numbered criteria cover the closed forms (quadrature
// cross-checks, asymptotic rates), the simulator (mean-contraction
// envelope, almost-sure trajectory bound, coupling success), the
// divergence estimates (KL and Renyi against their closed-form bounds),
// the duality checks, and artifact determinism through the CLI. Every
// criterion prints exactly one [PASS]/[FAIL] line with its measured
// numbers and runtime; the process exits nonzero if any criterion fails.
// Tolerances and runtime budgets are pinned as constants below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rclab/coupling.hpp"
#include "rclab/divergence.hpp"
#include "rclab/lyapunov.hpp"
#include "rclab/potential.hpp"
#include "rclab/report.hpp"
#include "rclab/rng.hpp"
#include "rclab/schedule.hpp"
#include "support/quadrature.hpp"

namespace {

using namespace rclab;
namespace fs = std::filesystem;
namespace quad = rclab::testing;
using Clock = std::chrono::steady_clock;

// --- pinned tolerances and budgets ------------------------------------
constexpr double kConstraintTol = 1e-10;      // |c0 * integral - 1|
constexpr double kJQuadRelTol = 1e-8;         // quadrature vs closed form
constexpr double kMomentSlack = 1e-12;        // moment(k) <= beta^k alpha (1 + slack)
constexpr double kSmallTRelTol = 0.01;        // kl * T convergence
constexpr double kLargeTRelTol = 0.10;        // kl(2T)/kl(T) vs e^{-3 nu T}
constexpr double kEnvelopeInflation = 1.1;    // envelope * 1.1 + 3 SE
constexpr double kSupSlack = 0.05;            // sup_z <= max(dist, R+1) + 0.05
constexpr double kCoupledMin = 0.99;          // coupled fraction at T
constexpr double kDvSlackFloor = -1e-12;      // duality slack lower bound
constexpr double kDvEqualityTol = 1e-12;      // optimal test function
constexpr double kBudget1 = 5.0, kBudget2 = 1.0, kBudget3 = 120.0, kBudget5 = 300.0,
                 kBudget6 = 120.0, kBudget7 = 60.0, kBudget8 = 120.0;

// Acceptance simulation seeds/settings (one seed everywhere; the gate is
// a fixed experiment, not a sweep).
constexpr std::uint64_t kSeed = 1;
constexpr double kQuadEps = 0.0632455532033676;  // 2 sqrt(dt) for the flat-drift run
constexpr double kDwellEps = 5e-3;

bool g_all_pass = true;

void report(int n, bool pass, const std::string& text, double elapsed, double budget) {
  const bool in_budget = elapsed < budget;
  const bool ok = pass && in_budget;
  g_all_pass = g_all_pass && ok;
  std::printf("[%s] criterion %d: %s (%.1fs of %.0fs budget)\n", ok ? "PASS" : "FAIL",
              n, text.c_str(), elapsed, budget);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) { return format_double(v); }

// --- shared simulation runs (cached across criteria) -------------------

SimConfig double_well_sim(double dist, double T) {
  SimConfig cfg;
  cfg.potential = make_potential("double_well", {}, 1);
  cfg.certificate = Certificate{0.25, 2.0, 1.5};
  cfg.x0 = {dist / 2.0};
  cfg.x0_prime = {-dist / 2.0};
  cfg.T = T;
  cfg.dt = 1e-3;
  cfg.n_paths = 10000;
  cfg.seed = kSeed;
  cfg.eps_couple = kDwellEps;
  cfg.grid_stride = 10;
  cfg.workers = 1;
  return cfg;
}

struct Cache {
  SimResult quad;                      // flat-drift envelope run (criterion 3/4)
  ScheduleParams quad_sp;
  std::map<double, SimResult> dwell;   // T -> run at dist = 1 (criteria 5/6)
  std::map<double, ScheduleParams> dwell_sp;
};

// --- criterion 1: closed forms vs adaptive quadrature -------------------

bool criterion1(std::string& text) {
  double worst_constraint = 0.0, worst_j_rel = 0.0, worst_moment = -1e300;
  int combos = 0;
  for (double m : {0.5, 1.0}) {
    for (double M : {1.0, 4.0}) {
      for (double R : {0.5, 1.0, 2.0}) {
        for (double T : {0.5, 1.0, 2.0, 5.0}) {
          const ScheduleParams sp = make_schedule(Certificate{m, M, R}, T, 1.0);
          ++combos;

          // (a) the schedule spends its budget exactly.
          const auto weight = [&](double s) { return eta_bar(sp, s) * std::exp(sp.nu * s); };
          const double spent = sp.c0 * quad::integrate(weight, 0.0, T, 1e-12 / sp.c0);
          worst_constraint = std::max(worst_constraint, std::abs(spent - 1.0));

          // (b) the quadratic-cost closed form against nested quadrature.
          const double closed = j_value(sp);
          const auto integrand = [&](double t) {
            const double remaining =
                1.0 - sp.c0 * quad::integrate(weight, 0.0, t, 1e-12 / sp.c0);
            const double eb = eta_bar(sp, t);
            return eb * eb * std::exp(-sp.nu * t) * remaining;
          };
          const double quadj = quad::integrate(integrand, 0.0, T, 1e-9 * closed);
          worst_j_rel = std::max(worst_j_rel, std::abs(quadj - closed) / closed);

          // (c) every exponential moment respects its geometric envelope.
          const double alpha = alpha_value(sp), beta = beta_value(sp);
          double cap = alpha;
          for (int k = 1; k <= 5; ++k) {
            cap *= beta;
            worst_moment = std::max(
                worst_moment, moment_integral(sp, k) / cap - 1.0);
          }
        }
      }
    }
  }
  const bool pass = worst_constraint <= kConstraintTol && worst_j_rel <= kJQuadRelTol &&
                    worst_moment <= kMomentSlack;
  std::ostringstream os;
  os << combos << " parameter sets; worst |budget - 1| = " << fmt(worst_constraint)
     << ", worst J rel err = " << fmt(worst_j_rel)
     << ", worst moment excess = " << fmt(worst_moment);
  text = os.str();
  return pass;
}

// --- criterion 2: asymptotic rates of the KL bound ----------------------

bool criterion2(std::string& text) {
  const Certificate cert{1.0, 1.0, 1.0};

  const double a = kl_bound(make_schedule(cert, 1e-3, 1.0)) * 1e-3;
  const double b = kl_bound(make_schedule(cert, 1e-4, 1.0)) * 1e-4;
  const double small_rel = std::abs(a - b) / b;

  const ScheduleParams probe = make_schedule(cert, 1.0, 1.0);
  const double T = 10.0 / probe.nu;  // nu T = 10
  const double ratio = kl_bound(make_schedule(cert, 2.0 * T, 1.0)) /
                       kl_bound(make_schedule(cert, T, 1.0));
  const double target = std::exp(-3.0 * probe.nu * T);
  const double large_rel = std::abs(ratio / target - 1.0);

  const bool pass = small_rel <= kSmallTRelTol && large_rel <= kLargeTRelTol;
  std::ostringstream os;
  os << "kl*T drift " << fmt(small_rel) << " (tol 0.01); decay-rate mismatch "
     << fmt(large_rel) << " (tol 0.1) at nu*T = 10";
  text = os.str();
  return pass;
}

// --- criterion 3: mean-contraction envelope on the flat-drift run -------

bool criterion3(Cache& cache, std::string& text) {
  SimConfig cfg;
  cfg.potential = make_potential("quadratic", {{"kappa", 1.0}}, 2);
  cfg.certificate = Certificate{1.0, 1.0, 0.25};
  cfg.x0 = {0.5, 0.0};
  cfg.x0_prime = {-0.5, 0.0};
  cfg.T = 2.0;
  cfg.dt = 1e-3;
  cfg.n_paths = 10000;
  cfg.seed = kSeed;
  cfg.eps_couple = kQuadEps;
  cfg.grid_stride = 10;
  cfg.workers = 1;

  cache.quad_sp = make_schedule(cfg.certificate, cfg.T, cfg.dist());
  cache.quad = simulate(cfg, cache.quad_sp);
  const TrajectoryStats& ts = cache.quad.stats;

  int violations = 0;
  double worst_slack = -1e300, worst_t = 0.0;
  for (std::size_t j = 0; j < ts.grid.size(); ++j) {
    const double cap = kEnvelopeInflation * envelope(cache.quad_sp, ts.grid[j]) +
                       3.0 * ts.se_sqrt_f_z[j];
    const double slack = ts.mean_sqrt_f_z[j] - cap;
    if (slack > 0.0) ++violations;
    if (slack > worst_slack) {
      worst_slack = slack;
      worst_t = ts.grid[j];
    }
  }
  const bool pass = violations == 0 && !ts.failed;
  std::ostringstream os;
  os << violations << "/" << ts.grid.size()
     << " grid nodes above envelope*1.1 + 3 SE; worst slack " << fmt(worst_slack)
     << " at t = " << fmt(worst_t) << "; coupled fraction "
     << fmt(ts.coupled_fraction_at_T);
  text = os.str();
  return pass;
}

// --- criterion 4: almost-sure trajectory bound --------------------------

bool criterion4(Cache& cache, std::string& text) {
  // The flat-drift run from criterion 3 ...
  const double quad_bound = std::max(1.0, 0.25 + 1.0) + kSupSlack;
  bool pass = cache.quad.stats.max_sup_z <= quad_bound;
  std::ostringstream os;
  os << "sup|Z| " << fmt(cache.quad.stats.max_sup_z) << " vs " << fmt(quad_bound);

  // ... plus fresh double-well runs bracketing the shell radius.
  for (double dist : {0.5, 3.0}) {
    SimConfig cfg = double_well_sim(dist, 2.0);
    const ScheduleParams sp = make_schedule(cfg.certificate, cfg.T, cfg.dist());
    const SimResult res = simulate(cfg, sp);
    const double bound = std::max(dist, cfg.certificate.R + 1.0) + kSupSlack;
    pass = pass && res.stats.max_sup_z <= bound && !res.stats.failed;
    os << "; dist " << fmt(dist) << ": " << fmt(res.stats.max_sup_z) << " vs "
       << fmt(bound);
  }
  text = os.str();
  return pass;
}

// --- criterion 5: KL estimate under the bound, full coupling ------------

bool criterion5(Cache& cache, std::string& text) {
  bool pass = true;
  std::ostringstream os;
  bool first = true;
  for (double T : {1.0, 2.0, 4.0}) {
    SimConfig cfg = double_well_sim(1.0, T);
    const ScheduleParams sp = make_schedule(cfg.certificate, T, cfg.dist());
    cache.dwell_sp[T] = sp;
    cache.dwell[T] = simulate(cfg, sp);
    const SimResult& res = cache.dwell.at(T);
    const Estimate kl = kl_girsanov_estimate(res.stats, sp);
    const double bound = kl_bound(sp);
    const bool ok = kl.value <= bound + 3.0 * kl.se &&
                    res.stats.coupled_fraction_at_T >= kCoupledMin && !res.stats.failed;
    pass = pass && ok;
    os << (first ? "" : "; ") << "T=" << fmt(T) << ": kl_mc " << fmt(kl.value)
       << " vs bound " << fmt(bound) << ", coupled "
       << fmt(res.stats.coupled_fraction_at_T);
    first = false;
  }
  text = os.str();
  return pass;
}

// --- criterion 6: Renyi estimates vs bounds, monotone, KL limit ---------

bool criterion6(const Cache& cache, std::string& text) {
  bool pass = true;
  std::ostringstream os;
  double worst_margin = 1e300;

  bool first = true;
  for (const auto& [T, res] : cache.dwell) {
    const ScheduleParams& sp = cache.dwell_sp.at(T);
    std::vector<double> ints;
    ints.reserve(res.per_path_girsanov.size());
    for (double v : res.per_path_girsanov) {
      if (std::isfinite(v)) ints.push_back(v);
    }

    std::vector<RenyiEstimate> ests;
    for (double q : {1.1, 2.0, 4.0}) {
      const RenyiEstimate est = renyi_girsanov_estimate(ints, q, kSeed, 1000);
      const double bound = renyi_bound(sp, q);
      const double margin = bound + (est.ci_hi - est.value) - est.value;
      worst_margin = std::min(worst_margin, margin);
      pass = pass && margin >= 0.0;
      ests.push_back(est);
    }
    // Non-decreasing in the order, within the bootstrap intervals.
    for (std::size_t i = 0; i + 1 < ests.size(); ++i) {
      const double allowance = (ests[i].value - ests[i].ci_lo) +
                               (ests[i + 1].ci_hi - ests[i + 1].value);
      pass = pass && ests[i + 1].value >= ests[i].value - allowance;
    }
    // The small-order estimate collapses onto the KL estimate.
    const Estimate kl = kl_girsanov_estimate(res.stats, sp);
    const RenyiEstimate near_one = renyi_girsanov_estimate(ints, 1.001, kSeed, 1000);
    const double hw = std::max(near_one.value - near_one.ci_lo,
                               near_one.ci_hi - near_one.value);
    const double tol = 2.0 * (hw + kl.se) + 1e-12;
    const double gap = std::abs(near_one.value - kl.value);
    pass = pass && gap <= tol;
    os << (first ? "" : "; ") << "T=" << fmt(T) << ": q=2 est "
       << fmt(ests[1].value) << " vs bound " << fmt(renyi_bound(sp, 2.0))
       << ", |q->1 - kl| " << fmt(gap) << " (tol " << fmt(tol) << ")";
    first = false;
  }
  os << "; worst bound margin " << fmt(worst_margin);
  text = os.str();
  return pass;
}

// --- criterion 7: duality checks ----------------------------------------

bool criterion7(std::string& text) {
  // (a) the variational slack is nonnegative over random triples.
  RandomStream rs(kSeed, StreamTag::kTest, 7);
  double min_slack = 1e300;
  for (int it = 0; it < 10000; ++it) {
    const int n = 2 + static_cast<int>(rs.index_below(15));
    std::vector<double> p(n), r(n), phi(n);
    double sp_ = 0.0, sr_ = 0.0;
    for (int i = 0; i < n; ++i) {
      r[i] = 1e-6 + rs.uniform01();
      p[i] = rs.uniform01() < 0.25 ? 0.0 : rs.uniform01();
      phi[i] = 6.0 * (rs.uniform01() - 0.5);
      sp_ += p[i];
      sr_ += r[i];
    }
    if (sp_ == 0.0) {
      p[0] = 1.0;
      sp_ = 1.0;
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp_;
      r[i] /= sr_;
    }
    min_slack = std::min(min_slack, dv_duality_slack(p, r, phi));
  }

  // (b) the optimizer phi = log(p/r) achieves equality.
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4}, r{0.4, 0.3, 0.2, 0.1};
  std::vector<double> phi(4);
  for (int i = 0; i < 4; ++i) phi[i] = std::log(p[i] / r[i]);
  const double eq_slack = std::abs(dv_duality_slack(p, r, phi));

  // (c) empirical log-Harnack duality on double-well endpoint laws.
  const PotentialSpec pot = make_potential("double_well", {}, 1);
  const std::vector<double> x0{0.5}, x0p{-0.5};
  const std::int64_t n_end = 10000;
  const std::vector<double> sx =
      sample_endpoints(pot, x0, 2.0, 1e-3, n_end, kSeed, 0, 1);
  const std::vector<double> sxp = sample_endpoints(
      pot, x0p, 2.0, 1e-3, n_end, kSeed, std::uint64_t{1} << 32, 1);
  const ScheduleParams sp = make_schedule(Certificate{0.25, 2.0, 1.5}, 2.0, 1.0);
  const HarnackReport rep = log_harnack_check(
      sx, sxp, 1, sp, [](std::span<const double> x) { return std::tanh(x[0]); });

  const bool pass = min_slack >= kDvSlackFloor && eq_slack <= kDvEqualityTol && rep.pass;
  std::ostringstream os;
  os << "min dv slack " << fmt(min_slack) << " over 10000 triples; equality case "
     << fmt(eq_slack) << "; log-Harnack margin " << fmt(rep.margin) << " (lhs "
     << fmt(rep.lhs) << ", rhs " << fmt(rep.rhs) << ", 3SE "
     << fmt(3.0 * (rep.lhs_se + rep.rhs_se)) << ")";
  text = os.str();
  return pass;
}

// --- criterion 8: artifact determinism through the CLI ------------------

int run_cli(const std::string& cli, const std::string& config, const fs::path& out,
            int workers) {
  std::ostringstream cmd;
  cmd << "\"" << cli << "\" all --config \"" << config << "\" --workers " << workers
      << " --fixed-label det --out \"" << out.string() << "\" > /dev/null 2>&1";
  const int status = std::system(cmd.str().c_str());
  if (status < 0) return -1;
  return (status >> 8) & 0xff;  // POSIX wait status -> exit code
}

bool criterion8(const std::string& cli, std::string& text) {
  const fs::path base = fs::temp_directory_path() / "rclab_acceptance_det";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string config = (base / "config.json").string();
  write_text_file(config, R"({
  "T": 1.0,
  "dt": 0.001,
  "n_paths": 500,
  "eps_couple": 0.005,
  "bootstrap_resamples": 500,
  "certificate_pairs": 20000,
  "harnack": {"n_paths": 500}
})");

  const fs::path dir_a = base / "a", dir_b = base / "b", dir_c = base / "c";
  const int ra = run_cli(cli, config, dir_a, 1);
  const int rb = run_cli(cli, config, dir_b, 1);
  const int rc = run_cli(cli, config, dir_c, 8);
  if (ra != 0 || rb != 0 || rc != 0) {
    text = "CLI exits (workers 1, 1, 8): " + std::to_string(ra) + ", " +
           std::to_string(rb) + ", " + std::to_string(rc);
    fs::remove_all(base);
    return false;
  }

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir_a)) {
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::size_t mismatches = 0;
  for (const std::string& name : names) {
    const std::string a = read_text_file((dir_a / name).string());
    for (const fs::path& other : {dir_b, dir_c}) {
      if (!fs::exists(other / name) || read_text_file((other / name).string()) != a) {
        ++mismatches;
      }
    }
  }
  std::size_t count_b = 0, count_c = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_b)) ++count_b;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_c)) ++count_c;
  const bool pass = !names.empty() && mismatches == 0 && count_b == names.size() &&
                    count_c == names.size();
  std::ostringstream os;
  os << names.size() << " artifacts compared byte-wise across reruns and workers {1,8}; "
     << mismatches << " mismatches";
  text = os.str();
  fs::remove_all(base);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <path-to-rclab-cli>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];

  Cache cache;
  std::string text;

  {
    const auto t0 = Clock::now();
    const bool ok = criterion1(text);
    report(1, ok, text, seconds_since(t0), kBudget1);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion2(text);
    report(2, ok, text, seconds_since(t0), kBudget2);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion3(cache, text);
    report(3, ok, text, seconds_since(t0), kBudget3);
  }
  {
    // Budgeted jointly with the runs it extends; generous standalone cap.
    const auto t0 = Clock::now();
    const bool ok = criterion4(cache, text);
    report(4, ok, text, seconds_since(t0), kBudget5);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion5(cache, text);
    report(5, ok, text, seconds_since(t0), kBudget5);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion6(cache, text);
    report(6, ok, text, seconds_since(t0), kBudget6);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion7(text);
    report(7, ok, text, seconds_since(t0), kBudget7);
  }
  {
    const auto t0 = Clock::now();
    const bool ok = criterion8(cli, text);
    report(8, ok, text, seconds_since(t0), kBudget8);
  }

  if (!g_all_pass) {
    std::printf("acceptance: at least one criterion failed\n");
    return 1;
  }
  std::printf("acceptance: all criteria passed\n");
  return 0;
}
