#include "rclab/lyapunov.hpp"

#include <cmath>
#include <stdexcept>

namespace rclab {

LyapunovF LyapunovF::from_certificate(const Certificate& c) {
  c.validate();
  return LyapunovF{0.5 * c.R * (c.M + c.m), c.R};
}

double LyapunovF::value(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("LyapunovF::value: r must be >= 0");
  if (r <= r_f) {
    return -std::expm1(-c_f * r) / c_f;
  }
  const double plateau = std::exp(-c_f * r_f);
  return -std::expm1(-c_f * r_f) / c_f + plateau * (r - r_f);
}

double LyapunovF::deriv(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("LyapunovF::deriv: r must be >= 0");
  return std::exp(-c_f * (r < r_f ? r : r_f));
}

}  // namespace rclab
