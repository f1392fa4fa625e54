#include "rclab/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace rclab {

namespace {

void check_time(const ScheduleParams& sp, double t) {
  if (!(t >= 0.0) || t > sp.T * (1.0 + 1e-12) + 1e-300) {
    throw std::invalid_argument("schedule: t outside [0, T]");
  }
}

// 1 - e^{-x} for x >= 0, without cancellation.
double one_minus_exp_neg(double x) { return -std::expm1(-x); }

}  // namespace

ScheduleParams make_schedule(const Certificate& c, double T, double dist) {
  c.validate();
  if (!(T > 0.0)) throw std::invalid_argument("make_schedule: T must be > 0");
  if (!(dist >= 0.0)) throw std::invalid_argument("make_schedule: dist must be >= 0");
  ScheduleParams sp;
  sp.T = T;
  sp.dist = dist;
  sp.m = c.m;
  sp.M = c.M;
  sp.R = c.R;
  const double damp = std::exp(-0.5 * c.R * c.R * (c.m + c.M));
  sp.nu = 0.5 * c.m * damp;
  sp.c0 = 0.5 * damp;
  sp.c1 = std::exp(0.25 * c.R * c.R * (c.m + c.M));
  sp.m_xx = dist > 0.0 ? std::fmax(1.0, std::sqrt((c.R + 1.0) / dist)) : 1.0;
  return sp;
}

double eta_bar(const ScheduleParams& sp, double t) {
  check_time(sp, t);
  return 2.0 * sp.nu * std::exp(sp.nu * t) / (sp.c0 * std::expm1(2.0 * sp.nu * sp.T));
}

double eta(const ScheduleParams& sp, double t) {
  return std::sqrt(sp.dist) * eta_bar(sp, t);
}

double j_value(const ScheduleParams& sp) {
  const double s = sp.nu * sp.T;
  const double en = std::exp(-s);
  return (4.0 * sp.nu / (3.0 * sp.c0 * sp.c0)) * en * en * en * (2.0 + en) /
         (one_minus_exp_neg(s) * std::pow(1.0 + en, 3));
}

double c_of_T(const ScheduleParams& sp) {
  const double s = sp.nu * sp.T;
  const double en = std::exp(-s);
  return (8.0 / 3.0) * std::exp(1.25 * sp.R * sp.R * (sp.m + sp.M)) * en * en *
         (2.0 + en) / std::pow(1.0 + en, 3);
}

double kl_bound(const ScheduleParams& sp) {
  if (sp.dist == 0.0) return 0.0;
  const double s = sp.nu * sp.T;
  // nu / (e^{nu T} - 1) = nu e^{-nu T} / (1 - e^{-nu T})
  const double direct = c_of_T(sp) * sp.m_xx * sp.dist * sp.dist * sp.nu *
                        std::exp(-s) / one_minus_exp_neg(s);
  const double via_j = 0.5 * sp.c1 * sp.m_xx * sp.dist * sp.dist * j_value(sp);
  if (std::abs(direct - via_j) > 1e-12 * std::fmax(std::abs(direct), std::abs(via_j))) {
    throw std::logic_error("kl_bound: closed-form routes disagree");
  }
  return direct;
}

double moment_integral(const ScheduleParams& sp, int k) {
  if (k < 1) throw std::invalid_argument("moment_integral: k must be >= 1");
  const double s = sp.nu * sp.T;
  const double kk = static_cast<double>(k);
  const double bracket =
      one_minus_exp_neg((2.0 * kk - 1.0) * s) / (2.0 * kk - 1.0) -
      one_minus_exp_neg((2.0 * kk + 1.0) * s) / (2.0 * kk + 1.0);
  return std::pow(beta_value(sp), kk) * alpha_value(sp) * bracket;
}

double alpha_value(const ScheduleParams& sp) {
  const double s = sp.nu * sp.T;
  // e^{nu T} / (nu (e^{2 nu T} - 1)) = e^{-nu T} / (nu (1 - e^{-2 nu T}))
  return std::exp(-s) / (sp.nu * one_minus_exp_neg(2.0 * s));
}

double beta_value(const ScheduleParams& sp) {
  const double s = sp.nu * sp.T;
  const double denom = one_minus_exp_neg(2.0 * s);
  return 4.0 * sp.nu * sp.nu * std::exp(-2.0 * s) / (sp.c0 * sp.c0 * denom * denom);
}

double kappa_q(double q) {
  const double e = q - 1.0;
  return e + 2.0 * e * e;
}

double renyi_bound(const ScheduleParams& sp, double q) {
  if (!(q > 1.0)) throw std::invalid_argument("renyi_bound: q must be > 1");
  if (sp.dist == 0.0) return 0.0;
  const double a = sp.c1 * alpha_value(sp) / (sp.T * sp.m_xx);
  const double arg =
      kappa_q(q) * sp.T * sp.m_xx * sp.m_xx * sp.dist * sp.dist * beta_value(sp);
  double log_term;
  if (arg < 700.0) {
    log_term = std::log1p(a * std::expm1(arg));
  } else {
    // 1 + a(e^x - 1) = a e^x (1 + (1/a - 1) e^{-x})
    log_term = std::log(a) + arg + std::log1p((1.0 / a - 1.0) * std::exp(-arg));
  }
  return log_term / (2.0 * (q - 1.0));
}

double envelope(const ScheduleParams& sp, double t) {
  check_time(sp, t);
  const double spent = std::expm1(2.0 * sp.nu * t) / std::expm1(2.0 * sp.nu * sp.T);
  const double v = std::sqrt(sp.dist) * std::exp(-sp.nu * t) * (1.0 - spent);
  return v > 0.0 ? v : 0.0;
}

BoundReport make_bound_report(const ScheduleParams& sp,
                              const std::vector<double>& q_list) {
  BoundReport r;
  r.kl_bound = kl_bound(sp);
  r.alpha = alpha_value(sp);
  r.beta = beta_value(sp);
  r.c_of_T = c_of_T(sp);
  r.j_value = j_value(sp);
  for (double q : q_list) r.renyi_bounds[q] = renyi_bound(sp, q);
  return r;
}

namespace {

// Composite Simpson; the defining integrands are smooth, so a fixed fine
// grid is plenty for a self-check (the independent adaptive oracle lives
// in the test suite).
template <typename F>
double simpson(F&& f, double a, double b, int n_intervals) {
  const int n = n_intervals + (n_intervals % 2);  // even
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) {
    s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return s * h / 3.0;
}

}  // namespace

ScheduleVerifyReport verify_schedule_identities(const ScheduleParams& sp) {
  ScheduleVerifyReport r;

  const auto weight = [&](double t) {
    return simpson([&](double u) { return eta_bar(sp, u) * std::exp(sp.nu * u); },
                   0.0, t, 512);
  };
  r.constraint_error = std::abs(sp.c0 * weight(sp.T) - 1.0);

  const double kl = kl_bound(sp);
  const double via_j = 0.5 * sp.c1 * sp.m_xx * sp.dist * sp.dist * j_value(sp);
  r.kl_identity_rel_error =
      kl > 0.0 ? std::abs(kl - via_j) / kl : std::abs(kl - via_j);

  const double j = j_value(sp);
  r.j_moment_rel_error = std::abs(moment_integral(sp, 1) - j) / j;

  r.worst_moment_excess = 0.0;
  const double alpha = alpha_value(sp);
  const double beta = beta_value(sp);
  for (int k = 1; k <= 5; ++k) {
    const double excess = moment_integral(sp, k) - std::pow(beta, k) * alpha;
    if (excess > r.worst_moment_excess) r.worst_moment_excess = excess;
  }

  r.pass = r.constraint_error <= 1e-10 && r.kl_identity_rel_error <= 1e-12 &&
           r.j_moment_rel_error <= 1e-12 && r.worst_moment_excess <= 0.0;
  return r;
}

}  // namespace rclab
