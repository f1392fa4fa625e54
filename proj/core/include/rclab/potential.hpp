#pragma once

// Potentials U and the dissipativity certificate (m, M, R):
//
//   -(x - y) . (grad U(x) - grad U(y)) <= -m |x-y|^2   when |x-y| >  R
//                                      <=  M |x-y|^2   when |x-y| <= R
//
// with M >= m > 0. The certificate is an input claim about U; the
// checker samples pairs and reports the worst margin of each branch.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rclab {

struct Certificate {
  double m = 0.0;
  double M = 0.0;
  double R = 0.0;

  // Throws std::invalid_argument unless M >= m > 0 and R > 0.
  void validate() const;
};

// Gradient field of a scalar potential. Implementations must be pure:
// path workers call grad() concurrently.
class Potential {
 public:
  virtual ~Potential() = default;
  virtual const std::string& name() const = 0;
  virtual void grad(std::span<const double> x, std::span<double> out) const = 0;
  // Analytic U where available (built-ins); used by finite-difference tests.
  virtual bool has_value() const { return false; }
  virtual double value(std::span<const double> x) const;
};

struct PotentialSpec {
  std::shared_ptr<const Potential> field;
  int dim = 0;
  std::string name;
  std::map<std::string, double> parameters;
};

// Built-ins: "quadratic" (kappa |x|^2 / 2, parameter kappa, default 1)
// and "double_well" (|x|^4 - |x|^2). Unknown names are rejected.
PotentialSpec make_potential(const std::string& name,
                             const std::map<std::string, double>& parameters,
                             int dim);

// Validated gradient evaluation (dimension and finiteness checks).
std::vector<double> grad_at(const PotentialSpec& p, std::span<const double> x);

struct CertificateReport {
  bool pass = false;
  double worst_near_margin = 0.0;  // min over pairs of M|x-y|^2 - lhs
  double worst_far_margin = 0.0;   // min over pairs of -m|x-y|^2 - lhs
  std::int64_t n_pairs = 0;
  std::uint64_t seed = 0;
};

// Samples n_pairs point pairs uniformly in the ball of the given radius,
// adds a deterministic grid of stress pairs straddling |x-y| = R, and
// reports the worst margin of each certificate branch. Margins down to
// -1e-9 still pass (floating-point slack). Deterministic in the seed and
// independent of any sharding.
CertificateReport verify_certificate(const PotentialSpec& p, const Certificate& c,
                                     std::int64_t n_pairs, double radius,
                                     std::uint64_t seed);

// Default sampling ball radius for certificate checks.
inline double default_check_radius(const Certificate& c) {
  return c.R * 3.0 > 5.0 ? c.R * 3.0 : 5.0;
}

}  // namespace rclab
