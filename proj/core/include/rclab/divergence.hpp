#pragma once

// Monte Carlo divergence estimates from simulated couplings, and the
// dual checks (Donsker-Varadhan slack, Harnack inequalities).
//
// The simulator's per-path quantity is I = integral_0^T eta_t^2 |Z_t| dt.
// The change-of-measure argument turns it into
//
//   KL estimate       (1/2) E[I]
//   Renyi-q estimate  (1/(2(q-1))) log E[exp(kappa_q I)],
//                     kappa_q = (q-1) + 2(q-1)^2
//
// both of which the closed-form schedule bounds must dominate. The
// exponential functional can be heavy-tailed, so the Renyi estimator
// reports a nonparametric bootstrap interval and a tail-dominance flag
// instead of a CLT bar.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rclab/coupling.hpp"
#include "rclab/schedule.hpp"

namespace rclab {

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// (1/2) mean of the per-path Girsanov integrals, with CLT standard
// error. Rejects stats whose horizon differs from the schedule's.
Estimate kl_girsanov_estimate(const TrajectoryStats& stats, const ScheduleParams& sp);

struct RenyiEstimate {
  double q = 0.0;
  double value = 0.0;
  double ci_lo = 0.0;  // 95% percentile bootstrap
  double ci_hi = 0.0;
  bool heavy_tail = false;  // top 1% of paths carry > 50% of the mean weight
};

// Max-shifted log-sum-exp estimator of the order-q Renyi divergence
// bound; bootstrap resamples are drawn from a deterministic lane of the
// seed, so reports are reproducible. Rejects q <= 1 and non-finite
// integrals.
RenyiEstimate renyi_girsanov_estimate(std::span<const double> per_path_integrals,
                                      double q, std::uint64_t seed,
                                      int n_resamples = 1000);

// Donsker-Varadhan slack KL(p||r) + log sum_i r_i e^{phi_i} - sum_i p_i phi_i.
// Nonnegative for every test vector phi; zero iff phi = log(p/r) + const on
// the support of p. Rejects mismatched supports (p_i > 0 where r_i = 0).
double dv_duality_slack(std::span<const double> p, std::span<const double> r,
                        std::span<const double> phi);

using TestFunction = std::function<double(std::span<const double>)>;

struct HarnackReport {
  std::string flavor;    // "log" or "power"
  double q_prime = 0.0;  // 0 for the log flavor
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double margin = 0.0;  // rhs - lhs
  double constant = 0.0;
  double log_constant = 0.0;
  bool pass = false;  // margin >= -3 (lhs_se + rhs_se)
};

// Log-Harnack duality:  E phi(X_T | x)  <=  C + log E[e^phi](X_T | x'),
// with C the closed-form KL bound. Samples are flattened row-major
// endpoint sets from two independent plain runs. phi must be finite on
// every sample (bounded test function).
HarnackReport log_harnack_check(std::span<const double> samples_x,
                                std::span<const double> samples_xp, int dim,
                                const ScheduleParams& sp, const TestFunction& phi);

// Power-Harnack:  E phi(X_T | x)  <=  C_{q'} (E[phi^{q'}](X_T | x'))^{1/q'},
// where log C_{q'} = renyi_bound(q)/q' at the conjugate order
// q = q'/(q'-1). phi must be positive and finite on every sample. The
// multiplicative constant can overflow; log_constant always holds its log.
HarnackReport power_harnack_check(std::span<const double> samples_x,
                                  std::span<const double> samples_xp, int dim,
                                  const ScheduleParams& sp, const TestFunction& phi,
                                  double q_prime);

struct DivergenceReport {
  Estimate kl_mc;
  double kl_theorem = 0.0;
  std::map<double, RenyiEstimate> renyi_mc;
  std::map<double, double> renyi_theorem;
  std::int64_t n_paths = 0;
  std::vector<std::string> notes;
};

// Full per-run report: KL and Renyi estimates from the simulation against
// the closed-form bounds. Diverged paths (NaN integrals) are dropped and
// noted.
DivergenceReport make_divergence_report(const SimResult& result,
                                        const ScheduleParams& sp,
                                        const std::vector<double>& q_list,
                                        std::uint64_t seed, int n_resamples = 1000);

}  // namespace rclab
