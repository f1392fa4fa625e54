#include "rclab/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

#include "rclab/rng.hpp"
#include "rclab/summation.hpp"

namespace rclab {
namespace {

// mean and CLT standard error of a span, fixed order.
Estimate mean_se(std::span<const double> v) {
  MomentSums ms;
  for (double x : v) ms.add(x);
  return {ms.mean(), ms.std_error()};
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

// Applies phi to every row of a flattened sample set; rejects non-finite
// outputs (the checks need bounded test functions).
std::vector<double> apply_phi(std::span<const double> samples, int dim,
                              const TestFunction& phi, const char* what) {
  if (dim < 1) throw std::invalid_argument("harnack: dimension must be >= 1");
  const auto d = static_cast<std::size_t>(dim);
  if (samples.size() % d != 0 || samples.empty()) {
    throw std::invalid_argument("harnack: sample buffer is not a whole number of rows");
  }
  const std::size_t n = samples.size() / d;
  if (n < 2) throw std::invalid_argument("harnack: need at least two sample rows");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = phi(samples.subspan(i * d, d));
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string("harnack: ") + what +
                                  " produced a non-finite value on a sample");
    }
    out[i] = v;
  }
  return out;
}

// log of the empirical mean of e^{v_i}, max-shifted, with the
// delta-method standard error of the log.
void log_mean_exp(std::span<const double> v, double& log_mean, double& se_log) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  MomentSums w;
  for (double x : v) w.add(std::exp(x - mx));
  log_mean = mx + std::log(w.mean());
  se_log = w.std_error() / w.mean();
}

}  // namespace

Estimate kl_girsanov_estimate(const TrajectoryStats& stats, const ScheduleParams& sp) {
  if (stats.T != sp.T) {
    throw std::invalid_argument("kl estimate: stats horizon differs from schedule horizon");
  }
  if (stats.n_paths < 1) throw std::invalid_argument("kl estimate: no paths");
  return {0.5 * stats.girsanov_mean, 0.5 * stats.girsanov_se};
}

RenyiEstimate renyi_girsanov_estimate(std::span<const double> per_path_integrals,
                                      double q, std::uint64_t seed, int n_resamples) {
  if (!(q > 1.0)) throw std::invalid_argument("renyi estimate: q must be > 1");
  if (per_path_integrals.empty()) throw std::invalid_argument("renyi estimate: no integrals");
  if (n_resamples < 2) throw std::invalid_argument("renyi estimate: need >= 2 resamples");
  require_finite(per_path_integrals, "renyi estimate: per-path integrals");

  const std::size_t n = per_path_integrals.size();
  const double kq = kappa_q(q);
  const double inv = 1.0 / (2.0 * (q - 1.0));

  double mx = -std::numeric_limits<double>::infinity();
  for (double i : per_path_integrals) mx = std::max(mx, kq * i);
  // Shifted weights in path order; every sum below folds them in a fixed
  // order, so the estimate is independent of any upstream sharding.
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(kq * per_path_integrals[i] - mx);

  NeumaierSum total;
  for (double wi : w) total.add(wi);
  const double mean_w = total.value() / static_cast<double>(n);

  RenyiEstimate est;
  est.q = q;
  est.value = inv * (mx + std::log(mean_w));

  // Tail dominance: do the top 1% of paths carry more than half the mean?
  {
    std::vector<double> sorted(w);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t top = (n + 99) / 100;
    NeumaierSum top_sum;
    for (std::size_t i = 0; i < top; ++i) top_sum.add(sorted[i]);
    est.heavy_tail = top_sum.value() > 0.5 * total.value();
  }

  // Percentile bootstrap; one deterministic lane per resample. The max
  // shift is reused across resamples (the estimator is shift-invariant).
  std::vector<double> boot(static_cast<std::size_t>(n_resamples));
  for (int b = 0; b < n_resamples; ++b) {
    RandomStream rs(seed, StreamTag::kBootstrap, static_cast<std::uint64_t>(b));
    NeumaierSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(w[rs.index_below(n)]);
    boot[static_cast<std::size_t>(b)] = inv * (mx + std::log(s.value() / static_cast<double>(n)));
  }
  std::sort(boot.begin(), boot.end());
  const auto lo_idx = static_cast<std::size_t>(std::floor(0.025 * (n_resamples - 1)));
  const auto hi_idx = static_cast<std::size_t>(std::ceil(0.975 * (n_resamples - 1)));
  est.ci_lo = boot[lo_idx];
  est.ci_hi = boot[hi_idx];
  return est;
}

double dv_duality_slack(std::span<const double> p, std::span<const double> r,
                        std::span<const double> phi) {
  const std::size_t n = p.size();
  if (n == 0 || r.size() != n || phi.size() != n) {
    throw std::invalid_argument("dv slack: p, r, phi must share a nonempty support");
  }
  NeumaierSum sp_, sr_;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0) || !(r[i] >= 0.0) || !std::isfinite(p[i]) || !std::isfinite(r[i])) {
      throw std::invalid_argument("dv slack: p and r must be nonnegative and finite");
    }
    if (!std::isfinite(phi[i])) throw std::invalid_argument("dv slack: phi must be finite");
    if (p[i] > 0.0 && r[i] == 0.0) {
      throw std::invalid_argument("dv slack: p is not absolutely continuous w.r.t. r");
    }
    sp_.add(p[i]);
    sr_.add(r[i]);
  }
  if (std::abs(sp_.value() - 1.0) > 1e-9 || std::abs(sr_.value() - 1.0) > 1e-9) {
    throw std::invalid_argument("dv slack: p and r must sum to 1");
  }

  NeumaierSum kl;  // sum over the support of p of p log(p/r)
  NeumaierSum p_phi;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) kl.add(p[i] * std::log(p[i] / r[i]));
    p_phi.add(p[i] * phi[i]);
  }
  // log sum_i r_i e^{phi_i}, max-shifted over the support of r.
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (r[i] > 0.0) mx = std::max(mx, phi[i]);
  }
  NeumaierSum lse;
  for (std::size_t i = 0; i < n; ++i) {
    if (r[i] > 0.0) lse.add(r[i] * std::exp(phi[i] - mx));
  }
  return kl.value() + mx + std::log(lse.value()) - p_phi.value();
}

HarnackReport log_harnack_check(std::span<const double> samples_x,
                                std::span<const double> samples_xp, int dim,
                                const ScheduleParams& sp, const TestFunction& phi) {
  const std::vector<double> phi_x = apply_phi(samples_x, dim, phi, "test function");
  const std::vector<double> phi_xp = apply_phi(samples_xp, dim, phi, "test function");

  HarnackReport rep;
  rep.flavor = "log";
  rep.q_prime = 0.0;
  rep.constant = kl_bound(sp);
  rep.log_constant = std::log(rep.constant);
  const Estimate lhs = mean_se(phi_x);
  rep.lhs = lhs.value;
  rep.lhs_se = lhs.se;
  double log_mean = 0.0, se_log = 0.0;
  log_mean_exp(phi_xp, log_mean, se_log);
  rep.rhs = rep.constant + log_mean;
  rep.rhs_se = se_log;
  rep.margin = rep.rhs - rep.lhs;
  rep.pass = rep.margin >= -3.0 * (rep.lhs_se + rep.rhs_se);
  return rep;
}

HarnackReport power_harnack_check(std::span<const double> samples_x,
                                  std::span<const double> samples_xp, int dim,
                                  const ScheduleParams& sp, const TestFunction& phi,
                                  double q_prime) {
  if (!(q_prime > 1.0)) throw std::invalid_argument("harnack: q_prime must be > 1");
  const std::vector<double> phi_x = apply_phi(samples_x, dim, phi, "test function");
  const std::vector<double> phi_xp = apply_phi(samples_xp, dim, phi, "test function");
  for (double v : phi_x) {
    if (!(v > 0.0)) throw std::invalid_argument("harnack: power flavor needs phi > 0");
  }
  for (double v : phi_xp) {
    if (!(v > 0.0)) throw std::invalid_argument("harnack: power flavor needs phi > 0");
  }

  // Multiplicative constant at the conjugate order: the q'-Harnack bound
  // spends the order-q Renyi budget with q = q'/(q'-1).
  const double q = q_prime / (q_prime - 1.0);
  const double log_c = renyi_bound(sp, q) / q_prime;

  HarnackReport rep;
  rep.flavor = "power";
  rep.q_prime = q_prime;
  rep.log_constant = log_c;
  rep.constant = std::exp(log_c);  // may overflow to +inf; log_constant stays exact
  const Estimate lhs = mean_se(phi_x);
  rep.lhs = lhs.value;
  rep.lhs_se = lhs.se;
  MomentSums pow_m;
  for (double v : phi_xp) pow_m.add(std::pow(v, q_prime));
  const double m = pow_m.mean();
  rep.rhs = std::exp(log_c + std::log(m) / q_prime);
  rep.rhs_se = rep.rhs * pow_m.std_error() / (q_prime * m);
  rep.margin = rep.rhs - rep.lhs;
  rep.pass = rep.margin >= -3.0 * (rep.lhs_se + rep.rhs_se);
  return rep;
}

DivergenceReport make_divergence_report(const SimResult& result,
                                        const ScheduleParams& sp,
                                        const std::vector<double>& q_list,
                                        std::uint64_t seed, int n_resamples) {
  DivergenceReport rep;
  rep.kl_mc = kl_girsanov_estimate(result.stats, sp);
  rep.kl_theorem = kl_bound(sp);
  rep.n_paths = result.stats.n_paths;

  std::vector<double> integrals;
  integrals.reserve(result.per_path_girsanov.size());
  for (double v : result.per_path_girsanov) {
    if (std::isfinite(v)) integrals.push_back(v);
  }
  if (integrals.size() != result.per_path_girsanov.size()) {
    rep.notes.push_back("diverged paths dropped from Renyi estimates");
  }
  for (double q : q_list) {
    rep.renyi_theorem[q] = renyi_bound(sp, q);
    const RenyiEstimate est = renyi_girsanov_estimate(integrals, q, seed, n_resamples);
    if (est.heavy_tail) {
      rep.notes.push_back("heavy-tail flag at q = " + std::to_string(q));
    }
    rep.renyi_mc[q] = est;
  }
  return rep;
}

}  // namespace rclab
