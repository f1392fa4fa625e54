#include "rclab/coupling.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "rclab/rng.hpp"
#include "rclab/summation.hpp"

namespace rclab {
namespace {

constexpr double kSynchronousRadius = 1e-12;  // below this, e is noise; couple noise synchronously
constexpr std::int64_t kBlockPaths = 64;      // fixed block size => sharding-independent reduces

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

double separation(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  for (double c : v) {
    if (!std::isfinite(c)) return false;
  }
  return true;
}

// Number of EM steps; the grid definition needs T to be a step multiple.
std::int64_t steps_for(double T, double dt) {
  const double ratio = T / dt;
  const auto n = static_cast<std::int64_t>(std::llround(ratio));
  if (n < 1 || std::abs(static_cast<double>(n) - ratio) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument("coupling: T must be an integer multiple of dt");
  }
  return n;
}

// x += -tamed grad(x) dt + noise, with tamed g = g / (1 + dt |g|).
void tamed_em_update(std::span<double> x, const Potential& pot, double dt,
                     std::span<double> grad_buf, std::span<const double> noise) {
  pot.grad(x, grad_buf);
  const double scale = dt / (1.0 + dt * norm(grad_buf));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += -scale * grad_buf[i] + noise[i];
}

void moments_from(const NeumaierSum& s1, const NeumaierSum& s2, std::int64_t n,
                  double& mean, double& se) {
  if (n <= 0) {
    mean = 0.0;
    se = 0.0;
    return;
  }
  mean = s1.value() / static_cast<double>(n);
  if (n < 2) {
    se = 0.0;
    return;
  }
  double var = (s2.value() - static_cast<double>(n) * mean * mean) /
               static_cast<double>(n - 1);
  if (var < 0.0) var = 0.0;
  se = std::sqrt(var / static_cast<double>(n));
}

}  // namespace

double CutoffPair::rc(double r) const {
  if (r < 0.0) throw std::invalid_argument("cutoff: negative radius");
  const double u = (r - R) / width;
  if (u <= 0.0) return 1.0;
  if (u >= 1.0) return 0.0;
  const double s = u * u * (3.0 - 2.0 * u);
  return std::cos(0.5 * std::numbers::pi * s);
}

double CutoffPair::sc(double r) const {
  if (r < 0.0) throw std::invalid_argument("cutoff: negative radius");
  const double u = (r - R) / width;
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double s = u * u * (3.0 - 2.0 * u);
  return std::sin(0.5 * std::numbers::pi * s);
}

void StepScratch::resize(int d) {
  grad.resize(d);
  db.resize(d);
  dbbar.resize(d);
  e.resize(d);
}

void SimConfig::validate() const {
  if (!potential.field) throw std::invalid_argument("sim config: potential is not set");
  if (potential.dim < 1) throw std::invalid_argument("sim config: dimension must be >= 1");
  const auto d = static_cast<std::size_t>(potential.dim);
  if (x0.size() != d || x0_prime.size() != d) {
    throw std::invalid_argument("sim config: x0 and x0_prime must have the potential dimension");
  }
  if (!all_finite(x0) || !all_finite(x0_prime)) {
    throw std::invalid_argument("sim config: initial points must be finite");
  }
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("sim config: T must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("sim config: dt must be positive");
  if (!(dt < T)) throw std::invalid_argument("sim config: dt must be smaller than T");
  (void)steps_for(T, dt);
  if (n_paths < 1) throw std::invalid_argument("sim config: n_paths must be >= 1");
  if (grid_stride < 1) throw std::invalid_argument("sim config: grid_stride must be >= 1");
  if (workers < 1) throw std::invalid_argument("sim config: workers must be >= 1");
  if (!std::isfinite(eps_couple)) throw std::invalid_argument("sim config: eps_couple must be finite");
  certificate.validate();
}

double SimConfig::dist() const { return separation(x0, x0_prime); }

double SimConfig::eps_couple_effective() const {
  if (eps_couple > 0.0) return eps_couple;
  return 1e-4 * std::max(1.0, dist());
}

std::int64_t SimConfig::n_steps() const { return steps_for(T, dt); }

CouplingState make_initial_state(const SimConfig& cfg) {
  cfg.validate();
  CouplingState st;
  st.t = 0.0;
  st.x = cfg.x0;
  st.x_pp = cfg.x0_prime;
  st.x_p = cfg.x0_prime;
  st.coupled = false;
  st.girsanov_acc = 0.0;
  st.sup_z = cfg.dist();
  st.diverged = false;
  return st;
}

void step(CouplingState& st, const SimConfig& cfg, const ScheduleParams& sp,
          std::span<const double> noise_rc, std::span<const double> noise_sc,
          StepScratch& scratch) {
  if (st.diverged) return;
  const int d = cfg.potential.dim;
  if (static_cast<int>(noise_rc.size()) != d || static_cast<int>(noise_sc.size()) != d) {
    throw std::invalid_argument("coupling: noise vectors must have the potential dimension");
  }
  const double dt = cfg.dt;
  if (st.t + dt > cfg.T * (1.0 + 1e-9) + 1e-12) {
    throw std::invalid_argument("coupling: step would pass the horizon");
  }
  scratch.resize(d);
  const double sq = std::sqrt(dt);
  const Potential& pot = *cfg.potential.field;

  // Noise construction and steering data, all from the step-start state.
  double shift = 0.0;
  double w_start = 0.0;  // eta(t)^2 |Z_t| at the left endpoint
  bool shifted = false;
  if (!st.coupled) {
    const double r0 = separation(st.x, st.x_pp);
    const double eta0 = eta(sp, st.t);
    w_start = eta0 * eta0 * r0;
    const CutoffPair cut{cfg.certificate.R, 1.0};
    const double rc = cut.rc(r0);
    const double sc = cut.sc(r0);
    if (r0 < kSynchronousRadius) {
      // Reflection direction is numerically undefined; couple the noise.
      for (int i = 0; i < d; ++i) {
        scratch.db[i] = sq * (rc * noise_rc[i] + sc * noise_sc[i]);
        scratch.dbbar[i] = scratch.db[i];
      }
    } else {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) {
        scratch.e[i] = (st.x[i] - st.x_pp[i]) / r0;
        dot += scratch.e[i] * noise_rc[i];
      }
      for (int i = 0; i < d; ++i) {
        scratch.db[i] = sq * (rc * noise_rc[i] + sc * noise_sc[i]);
        scratch.dbbar[i] =
            sq * (rc * (noise_rc[i] - 2.0 * dot * scratch.e[i]) + sc * noise_sc[i]);
      }
      // Per-step steering displacement, capped so X'' never overshoots X.
      shift = std::min(eta0 * std::sqrt(r0) * dt, r0);
      shifted = true;
    }
  } else {
    for (int i = 0; i < d; ++i) {
      scratch.db[i] = sq * noise_rc[i];  // rc(0) = 1, sc(0) = 0
      scratch.dbbar[i] = scratch.db[i];
    }
  }

  tamed_em_update(st.x, pot, dt, scratch.grad, scratch.db);
  if (st.coupled) {
    st.x_pp = st.x;
  } else {
    pot.grad(st.x_pp, scratch.grad);
    const double scale = dt / (1.0 + dt * norm(scratch.grad));
    for (int i = 0; i < d; ++i) {
      st.x_pp[i] += -scale * scratch.grad[i] + (shifted ? shift * scratch.e[i] : 0.0) +
                    scratch.dbbar[i];
    }
  }
  if (cfg.run_x_prime) tamed_em_update(st.x_p, pot, dt, scratch.grad, scratch.dbbar);
  st.t += dt;

  // Post-step separation (after any coupling snap) closes the trapezoid.
  double r1 = 0.0;
  if (!st.coupled) {
    r1 = separation(st.x, st.x_pp);
    if (std::isfinite(r1) && r1 <= cfg.eps_couple_effective()) {
      st.coupled = true;
      st.x_pp = st.x;
      r1 = 0.0;
    }
  }
  double w_end = 0.0;
  if (r1 > 0.0) {
    const double eta1 = eta(sp, st.t);
    w_end = eta1 * eta1 * r1;
  }
  st.girsanov_acc += 0.5 * dt * (w_start + w_end);
  if (r1 > st.sup_z) st.sup_z = r1;

  if (!all_finite(st.x) || !all_finite(st.x_pp) ||
      (cfg.run_x_prime && !all_finite(st.x_p)) || !std::isfinite(st.girsanov_acc)) {
    st.diverged = true;
  }
}

SimResult simulate(const SimConfig& cfg, const ScheduleParams& sp) {
  cfg.validate();
  if (sp.T != cfg.T) {
    throw std::invalid_argument("simulate: schedule horizon differs from config horizon");
  }
  const auto clock_start = std::chrono::steady_clock::now();
  const int d = cfg.potential.dim;
  const std::int64_t n_steps = cfg.n_steps();

  std::vector<std::int64_t> node_step;
  for (std::int64_t k = 0; k <= n_steps; k += cfg.grid_stride) node_step.push_back(k);
  if (node_step.back() != n_steps) node_step.push_back(n_steps);
  const std::size_t n_nodes = node_step.size();

  const LyapunovF f = LyapunovF::from_certificate(cfg.certificate);
  const double dist0 = cfg.dist();

  struct BlockAgg {
    std::vector<NeumaierSum> z, z2, sf, fv, f2;
    MomentSums girsanov;
    std::int64_t coupled = 0, diverged = 0, used = 0;
    double supz = 0.0;
  };
  const std::int64_t n_blocks = (cfg.n_paths + kBlockPaths - 1) / kBlockPaths;
  std::vector<BlockAgg> blocks(static_cast<std::size_t>(n_blocks));

  SimResult out;
  out.per_path_girsanov.assign(static_cast<std::size_t>(cfg.n_paths),
                               std::numeric_limits<double>::quiet_NaN());
  if (cfg.store_endpoints) {
    out.endpoints_x.assign(static_cast<std::size_t>(cfg.n_paths) * d,
                           std::numeric_limits<double>::quiet_NaN());
    if (cfg.run_x_prime) {
      out.endpoints_xp.assign(static_cast<std::size_t>(cfg.n_paths) * d,
                              std::numeric_limits<double>::quiet_NaN());
    }
  }

  std::atomic<std::int64_t> next_block{0};
  auto worker = [&]() {
    StepScratch scratch;
    scratch.resize(d);
    std::vector<double> xi_rc(static_cast<std::size_t>(d));
    std::vector<double> xi_sc(static_cast<std::size_t>(d));
    std::vector<double> r_at_node(n_nodes);
    for (;;) {
      const std::int64_t b = next_block.fetch_add(1, std::memory_order_relaxed);
      if (b >= n_blocks) break;
      BlockAgg& agg = blocks[static_cast<std::size_t>(b)];
      agg.z.resize(n_nodes);
      agg.z2.resize(n_nodes);
      agg.sf.resize(n_nodes);
      agg.fv.resize(n_nodes);
      agg.f2.resize(n_nodes);
      const std::int64_t p_lo = b * kBlockPaths;
      const std::int64_t p_hi = std::min(cfg.n_paths, p_lo + kBlockPaths);
      for (std::int64_t p = p_lo; p < p_hi; ++p) {
        CouplingState st = make_initial_state(cfg);
        RandomStream rs(cfg.seed, StreamTag::kPathNoise, static_cast<std::uint64_t>(p));
        std::size_t node = 0;
        r_at_node[node++] = dist0;
        for (std::int64_t k = 0; k < n_steps && !st.diverged; ++k) {
          st.t = static_cast<double>(k) * cfg.dt;  // keep node times exact products
          for (int i = 0; i < d; ++i) xi_rc[i] = rs.normal();
          for (int i = 0; i < d; ++i) xi_sc[i] = rs.normal();
          step(st, cfg, sp, xi_rc, xi_sc, scratch);
          if (node < n_nodes && node_step[node] == k + 1) {
            r_at_node[node++] = st.coupled ? 0.0 : separation(st.x, st.x_pp);
          }
        }
        if (st.diverged) {
          ++agg.diverged;
          continue;
        }
        ++agg.used;
        for (std::size_t j = 0; j < n_nodes; ++j) {
          const double r = r_at_node[j];
          const double fr = f.value(r);
          agg.z[j].add(r);
          agg.z2[j].add(r * r);
          agg.sf[j].add(std::sqrt(fr));
          agg.fv[j].add(fr);
          agg.f2[j].add(fr * fr);
        }
        agg.girsanov.add(st.girsanov_acc);
        out.per_path_girsanov[static_cast<std::size_t>(p)] = st.girsanov_acc;
        if (st.coupled) ++agg.coupled;
        if (st.sup_z > agg.supz) agg.supz = st.sup_z;
        if (cfg.store_endpoints) {
          std::copy(st.x.begin(), st.x.end(),
                    out.endpoints_x.begin() + static_cast<std::ptrdiff_t>(p) * d);
          if (cfg.run_x_prime) {
            std::copy(st.x_p.begin(), st.x_p.end(),
                      out.endpoints_xp.begin() + static_cast<std::ptrdiff_t>(p) * d);
          }
        }
      }
    }
  };

  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(cfg.workers));
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Fixed-order reduction: block 0, 1, 2, ... regardless of which worker
  // ran which block, so stats are bit-identical for any worker count.
  std::vector<NeumaierSum> gz(n_nodes), gz2(n_nodes), gsf(n_nodes), gf(n_nodes), gf2(n_nodes);
  MomentSums girs;
  std::int64_t coupled = 0, diverged = 0, used = 0;
  double supz = 0.0;
  for (const BlockAgg& agg : blocks) {
    for (std::size_t j = 0; j < n_nodes; ++j) {
      gz[j].merge(agg.z[j]);
      gz2[j].merge(agg.z2[j]);
      gsf[j].merge(agg.sf[j]);
      gf[j].merge(agg.fv[j]);
      gf2[j].merge(agg.f2[j]);
    }
    girs.merge(agg.girsanov);
    coupled += agg.coupled;
    diverged += agg.diverged;
    used += agg.used;
    if (agg.supz > supz) supz = agg.supz;
  }

  TrajectoryStats& ts = out.stats;
  ts.grid.resize(n_nodes);
  ts.mean_abs_z.resize(n_nodes);
  ts.se_abs_z.resize(n_nodes);
  ts.mean_sqrt_f_z.resize(n_nodes);
  ts.se_sqrt_f_z.resize(n_nodes);
  ts.mean_f_z.resize(n_nodes);
  ts.se_f_z.resize(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j) {
    ts.grid[j] = static_cast<double>(node_step[j]) * cfg.dt;
    moments_from(gz[j], gz2[j], used, ts.mean_abs_z[j], ts.se_abs_z[j]);
    moments_from(gsf[j], gf[j], used, ts.mean_sqrt_f_z[j], ts.se_sqrt_f_z[j]);
    moments_from(gf[j], gf2[j], used, ts.mean_f_z[j], ts.se_f_z[j]);
  }
  ts.coupled_fraction_at_T =
      used > 0 ? static_cast<double>(coupled) / static_cast<double>(used) : 0.0;
  ts.max_sup_z = supz;
  ts.girsanov_mean = girs.mean();
  ts.girsanov_se = girs.std_error();
  ts.n_paths = cfg.n_paths;
  ts.diverged_paths = diverged;
  ts.failed = diverged * 1000 > cfg.n_paths;
  ts.T = cfg.T;
  ts.dt = cfg.dt;

  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return out;
}

std::vector<double> sample_endpoints(const PotentialSpec& potential,
                                     std::span<const double> x0, double T, double dt,
                                     std::int64_t n_paths, std::uint64_t seed,
                                     std::uint64_t stream_salt, int workers) {
  if (!potential.field) throw std::invalid_argument("endpoints: potential is not set");
  const int d = potential.dim;
  if (d < 1 || x0.size() != static_cast<std::size_t>(d) || !all_finite(x0)) {
    throw std::invalid_argument("endpoints: x0 must be finite with the potential dimension");
  }
  if (!(T > 0.0) || !(dt > 0.0) || !(dt <= T)) {
    throw std::invalid_argument("endpoints: need 0 < dt <= T");
  }
  if (n_paths < 1) throw std::invalid_argument("endpoints: n_paths must be >= 1");
  if (workers < 1) throw std::invalid_argument("endpoints: workers must be >= 1");
  const std::int64_t n_steps = steps_for(T, dt);
  const Potential& pot = *potential.field;

  std::vector<double> out(static_cast<std::size_t>(n_paths) * d,
                          std::numeric_limits<double>::quiet_NaN());
  const std::int64_t n_blocks = (n_paths + kBlockPaths - 1) / kBlockPaths;
  std::atomic<std::int64_t> next_block{0};
  auto worker_fn = [&]() {
    std::vector<double> x(static_cast<std::size_t>(d));
    std::vector<double> noise(static_cast<std::size_t>(d));
    std::vector<double> grad(static_cast<std::size_t>(d));
    const double sq = std::sqrt(dt);
    for (;;) {
      const std::int64_t b = next_block.fetch_add(1, std::memory_order_relaxed);
      if (b >= n_blocks) break;
      const std::int64_t p_lo = b * kBlockPaths;
      const std::int64_t p_hi = std::min(n_paths, p_lo + kBlockPaths);
      for (std::int64_t p = p_lo; p < p_hi; ++p) {
        RandomStream rs(seed, StreamTag::kEndpointNoise,
                        stream_salt + static_cast<std::uint64_t>(p));
        std::copy(x0.begin(), x0.end(), x.begin());
        for (std::int64_t k = 0; k < n_steps; ++k) {
          for (int i = 0; i < d; ++i) noise[i] = sq * rs.normal();
          tamed_em_update(x, pot, dt, grad, noise);
        }
        if (all_finite(x)) {
          std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(p) * d);
        }
      }
    }
  };
  if (workers == 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace rclab
