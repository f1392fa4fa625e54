#pragma once

// Three-process coupling simulator.
//
// X starts at x0 and follows the plain dynamics. X'' starts at x0_prime
// and carries an extra steering drift of strength eta(t) along
// (X - X'')/sqrt(|X - X''|) until the two meet. X' starts at x0_prime
// and is the undistorted reference chain driven by the mirrored noise.
//
// Noise construction: with Z = X - X'', r = |Z|, e = Z/r, one Gaussian
// pair (xi_rc, xi_sc) per step, and a cutoff pair rc/sc,
//
//   dB    = rc(r) xi_rc + sc(r) xi_sc
//   dBbar = rc(r) (xi_rc - 2 (e . xi_rc) e) + sc(r) xi_sc     (reflected)
//
// and dBbar = dB once coupled. Both dB and dBbar are standard Gaussian
// increments (rc^2 + sc^2 = 1 and reflections are isometries), so every
// process is an honest Euler-Maruyama chain of the underlying dynamics.
//
// Paths are independent work units on counter-based PRNG lanes;
// aggregation is in fixed path order with compensated sums, so results
// are bit-identical for any worker count.

#include <cstdint>
#include <vector>

#include "rclab/lyapunov.hpp"
#include "rclab/potential.hpp"
#include "rclab/schedule.hpp"

namespace rclab {

// Smooth orthonormal cutoff: rc = 1 on [0, R], 0 beyond R + width,
// rc^2 + sc^2 = 1 identically (cos/sin of a smoothstep ramp).
struct CutoffPair {
  double R = 1.0;
  double width = 1.0;

  double rc(double r) const;
  double sc(double r) const;
};

struct SimConfig {
  PotentialSpec potential;
  Certificate certificate;
  std::vector<double> x0;
  std::vector<double> x0_prime;
  double T = 1.0;
  double dt = 1e-3;
  std::int64_t n_paths = 1000;
  std::uint64_t seed = 1;
  // Coupling declaration radius; <= 0 selects the default 1e-4 * max(1, dist).
  double eps_couple = 0.0;
  int grid_stride = 10;
  bool run_x_prime = true;
  bool store_endpoints = false;
  int workers = 1;

  void validate() const;
  double dist() const;
  double eps_couple_effective() const;
  std::int64_t n_steps() const;
};

struct CouplingState {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> x_pp;
  std::vector<double> x_p;
  bool coupled = false;
  double girsanov_acc = 0.0;  // running trapezoid of eta(t)^2 |Z_t|
  double sup_z = 0.0;
  bool diverged = false;
};

// Reusable per-path scratch so the hot loop never allocates.
struct StepScratch {
  std::vector<double> grad;
  std::vector<double> db;
  std::vector<double> dbbar;
  std::vector<double> e;  // unit separation direction at step start
  void resize(int d);
};

CouplingState make_initial_state(const SimConfig& cfg);

// One explicit Euler-Maruyama step with tamed drift g/(1 + dt |g|).
// noise_rc/noise_sc are independent standard Gaussian vectors. The
// steering displacement is capped at r (never overshoot the partner);
// once |x - x_pp| <= eps_couple after a step, coupled is set and x_pp
// tracks x exactly. Non-finite values mark the state diverged.
void step(CouplingState& state, const SimConfig& cfg, const ScheduleParams& sp,
          std::span<const double> noise_rc, std::span<const double> noise_sc,
          StepScratch& scratch);

struct TrajectoryStats {
  std::vector<double> grid;
  std::vector<double> mean_abs_z, se_abs_z;
  std::vector<double> mean_sqrt_f_z, se_sqrt_f_z;
  std::vector<double> mean_f_z, se_f_z;
  double coupled_fraction_at_T = 0.0;
  double max_sup_z = 0.0;
  double girsanov_mean = 0.0;
  double girsanov_se = 0.0;
  std::int64_t n_paths = 0;
  std::int64_t diverged_paths = 0;
  bool failed = false;  // > 0.1% of paths diverged
  double T = 0.0;
  double dt = 0.0;
};

struct SimResult {
  TrajectoryStats stats;
  std::vector<double> per_path_girsanov;  // indexed by path
  std::vector<double> endpoints_x;        // n_paths x d, row-major (optional)
  std::vector<double> endpoints_xp;       // reference chain endpoints (optional)
  double elapsed_seconds = 0.0;
};

SimResult simulate(const SimConfig& cfg, const ScheduleParams& sp);

// Endpoint samples of one plain (uncoupled) chain from x0: n_paths x d,
// row-major. stream_salt separates independent sample sets under one seed.
std::vector<double> sample_endpoints(const PotentialSpec& potential,
                                     std::span<const double> x0, double T,
                                     double dt, std::int64_t n_paths,
                                     std::uint64_t seed, std::uint64_t stream_salt,
                                     int workers);

}  // namespace rclab
