#pragma once

// Concave distance transform used by the contraction argument:
//
//   f(r) = integral_0^r exp(-c_f * min(r', r_f)) dr'
//
// evaluated in closed form. f is strictly increasing, concave, linear
// beyond r_f, and satisfies exp(-c_f r_f) * r <= f(r) <= r.

#include "rclab/potential.hpp"

namespace rclab {

struct LyapunovF {
  double c_f = 1.0;
  double r_f = 1.0;

  // Standard choice driven by the certificate: r_f = R, c_f = R(M+m)/2.
  static LyapunovF from_certificate(const Certificate& c);

  // Closed form; cancellation-safe near r = 0. Rejects r < 0.
  double value(double r) const;

  // f'(r) = exp(-c_f * min(r, r_f)), in (0, 1]. Rejects r < 0.
  double deriv(double r) const;
};

}  // namespace rclab
