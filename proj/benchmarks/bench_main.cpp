// Microbenchmarks for the hot paths: PRNG draws, one coupling step, a
// small end-to-end simulation, and the schedule closed forms.

#include <benchmark/benchmark.h>

#include <vector>

#include "rclab/coupling.hpp"
#include "rclab/rng.hpp"
#include "rclab/schedule.hpp"

namespace {

rclab::SimConfig double_well_config(int n_paths) {
  rclab::SimConfig cfg;
  cfg.potential = rclab::make_potential("double_well", {}, 1);
  cfg.certificate = {0.25, 2.0, 1.5};
  cfg.x0 = {0.5};
  cfg.x0_prime = {-0.5};
  cfg.T = 1.0;
  cfg.dt = 1e-3;
  cfg.n_paths = n_paths;
  cfg.seed = 7;
  cfg.eps_couple = 5e-3;
  return cfg;
}

void BM_PhiloxNormal(benchmark::State& state) {
  rclab::RandomStream rs(1, rclab::StreamTag::kTest, 0);
  double acc = 0.0;
  for (auto _ : state) acc += rs.normal();
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_PhiloxNormal);

void BM_CouplingStep(benchmark::State& state) {
  const rclab::SimConfig cfg = double_well_config(1);
  const rclab::ScheduleParams sp = rclab::make_schedule(cfg.certificate, cfg.T, cfg.dist());
  rclab::StepScratch scratch;
  scratch.resize(1);
  rclab::RandomStream rs(1, rclab::StreamTag::kTest, 1);
  std::vector<double> xi_rc(1), xi_sc(1);
  rclab::CouplingState st = rclab::make_initial_state(cfg);
  const std::int64_t n_steps = cfg.n_steps();
  std::int64_t k = 0;
  for (auto _ : state) {
    if (k == n_steps) {  // restart the path when the horizon is reached
      st = rclab::make_initial_state(cfg);
      k = 0;
    }
    st.t = static_cast<double>(k) * cfg.dt;
    xi_rc[0] = rs.normal();
    xi_sc[0] = rs.normal();
    rclab::step(st, cfg, sp, xi_rc, xi_sc, scratch);
    ++k;
  }
  benchmark::DoNotOptimize(st.girsanov_acc);
}
BENCHMARK(BM_CouplingStep);

void BM_SimulateSmall(benchmark::State& state) {
  const rclab::SimConfig cfg = double_well_config(64);
  const rclab::ScheduleParams sp = rclab::make_schedule(cfg.certificate, cfg.T, cfg.dist());
  for (auto _ : state) {
    const rclab::SimResult res = rclab::simulate(cfg, sp);
    benchmark::DoNotOptimize(res.stats.girsanov_mean);
  }
}
BENCHMARK(BM_SimulateSmall)->Unit(benchmark::kMillisecond);

void BM_ScheduleBounds(benchmark::State& state) {
  const rclab::Certificate cert{0.25, 2.0, 1.5};
  const rclab::ScheduleParams sp = rclab::make_schedule(cert, 2.0, 1.0);
  double acc = 0.0;
  for (auto _ : state) {
    acc += rclab::kl_bound(sp) + rclab::renyi_bound(sp, 2.0) + rclab::j_value(sp);
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_ScheduleBounds);

}  // namespace

BENCHMARK_MAIN();
