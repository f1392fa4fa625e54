#pragma once

// Drift schedule and closed-form divergence bounds.
//
// Given a certificate (m, M, R), a horizon T and an initial gap dist,
// the coupling analysis yields a contraction rate nu, a drift-efficiency
// constant c0, an inflation constant c1 and an initial-gap factor m_xx:
//
//   nu  = (m/2) exp(-R^2 (m+M)/2)        c0 = (1/2) exp(-R^2 (m+M)/2)
//   c1  = exp(R^2 (m+M)/4)               m_xx = max(1, sqrt((R+1)/dist))
//
// The steering schedule eta_bar(t) = 2 nu e^{nu t} / (c0 (e^{2 nu T}-1))
// is the explicit choice that spends its budget exactly by time T:
// c0 * integral_0^T eta_bar e^{nu s} ds = 1. The full drift strength is
// eta(t) = sqrt(dist) * eta_bar(t).
//
// All exponential differences below go through expm1/log1p so the
// formulas stay accurate from nu*T << 1 up to nu*T >> 1.

#include <map>
#include <vector>

#include "rclab/potential.hpp"

namespace rclab {

struct ScheduleParams {
  double T = 0.0;
  double nu = 0.0;
  double c0 = 0.0;
  double c1 = 0.0;
  double dist = 0.0;
  double m_xx = 1.0;
  // Certificate echo; the T-dependent prefactor needs R^2 (m+M).
  double m = 0.0;
  double M = 0.0;
  double R = 0.0;
};

// Derives every constant above. dist = 0 is the degenerate case: m_xx = 1
// and all bounds downstream are 0. Rejects T <= 0 and dist < 0.
ScheduleParams make_schedule(const Certificate& c, double T, double dist);

// Schedule strength at time t in [0, T]; rejects t outside.
double eta_bar(const ScheduleParams& sp, double t);
double eta(const ScheduleParams& sp, double t);  // sqrt(dist) * eta_bar

// Quadratic cost of the schedule against the contraction envelope:
//   J = integral_0^T eta_bar^2 e^{-nu t} (1 - c0 integral_0^t eta_bar e^{nu s} ds) dt
// in closed form.
double j_value(const ScheduleParams& sp);

// T-dependent prefactor of the KL bound.
double c_of_T(const ScheduleParams& sp);

// KL divergence bound between the two endpoint laws:
//   kl_bound = c_of_T * m_xx * nu / (e^{nu T} - 1) * dist^2
// Also satisfies kl_bound = (1/2) c1 m_xx dist^2 j_value; both routes are
// evaluated and must agree, as an internal consistency check.
double kl_bound(const ScheduleParams& sp);

// Closed form of integral_0^T eta_bar^{2k} e^{-nu t} (1 - c0 ...) dt for
// k >= 1; moment_integral(1) == j_value. Bounded by beta^k * alpha.
double moment_integral(const ScheduleParams& sp, int k);

// Large-deviation constants: alpha(T) = e^{nu T} / (nu (e^{2 nu T} - 1)),
// beta(T) = 4 nu^2 e^{2 nu T} / (c0^2 (e^{2 nu T} - 1)^2).
double alpha_value(const ScheduleParams& sp);
double beta_value(const ScheduleParams& sp);

// Renyi divergence bound of order q > 1:
//   (1/(2(q-1))) log(1 + c1 alpha T^{-1} m_xx^{-1} (exp(kappa_q T m_xx^2 dist^2 beta) - 1))
// with kappa_q = (q-1) + 2(q-1)^2. Rejects q <= 1.
double renyi_bound(const ScheduleParams& sp, double q);

// Exponential-moment coefficient kappa_q.
double kappa_q(double q);

// Mean-contraction envelope under the schedule:
//   envelope(t) = sqrt(dist) e^{-nu t} (1 - (e^{2 nu t} - 1)/(e^{2 nu T} - 1)),
// equal to sqrt(dist) at t = 0 and exactly 0 at t = T.
double envelope(const ScheduleParams& sp, double t);

struct BoundReport {
  double kl_bound = 0.0;
  std::map<double, double> renyi_bounds;
  double alpha = 0.0;
  double beta = 0.0;
  double c_of_T = 0.0;
  double j_value = 0.0;
};

BoundReport make_bound_report(const ScheduleParams& sp,
                              const std::vector<double>& q_list);

// Self-checks of the closed forms against a composite-Simpson evaluation
// of the defining integrals (constraint saturation, the KL/J identity,
// moment_integral(1) == j_value, and moment_integral(k) <= beta^k alpha).
struct ScheduleVerifyReport {
  double constraint_error = 0.0;       // |c0 * integral - 1|
  double kl_identity_rel_error = 0.0;  // two kl routes
  double j_moment_rel_error = 0.0;     // j_value vs moment_integral(1)
  double worst_moment_excess = 0.0;    // max_k moment(k) - beta^k alpha
  bool pass = false;
};

ScheduleVerifyReport verify_schedule_identities(const ScheduleParams& sp);

}  // namespace rclab
