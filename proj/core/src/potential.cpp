#include "rclab/potential.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rclab/rng.hpp"

namespace rclab {

void Certificate::validate() const {
  if (!(m > 0.0) || !(M >= m) || !(R > 0.0) || !std::isfinite(m) ||
      !std::isfinite(M) || !std::isfinite(R)) {
    throw std::invalid_argument("certificate requires M >= m > 0 and R > 0");
  }
}

double Potential::value(std::span<const double>) const {
  throw std::logic_error("potential has no analytic value");
}

namespace {

double sqnorm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

class Quadratic final : public Potential {
 public:
  explicit Quadratic(double kappa) : kappa_(kappa), name_("quadratic") {
    if (!(kappa > 0.0)) throw std::invalid_argument("quadratic: kappa must be > 0");
  }
  const std::string& name() const override { return name_; }
  void grad(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = kappa_ * x[i];
  }
  bool has_value() const override { return true; }
  double value(std::span<const double> x) const override {
    return 0.5 * kappa_ * sqnorm(x);
  }

 private:
  double kappa_;
  std::string name_;
};

// |x|^4 - |x|^2, gradient (4|x|^2 - 2) x.
class DoubleWell final : public Potential {
 public:
  DoubleWell() : name_("double_well") {}
  const std::string& name() const override { return name_; }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const double r2 = sqnorm(x);
    const double c = 4.0 * r2 - 2.0;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
  }
  bool has_value() const override { return true; }
  double value(std::span<const double> x) const override {
    const double r2 = sqnorm(x);
    return r2 * r2 - r2;
  }

 private:
  std::string name_;
};

}  // namespace

PotentialSpec make_potential(const std::string& name,
                             const std::map<std::string, double>& parameters,
                             int dim) {
  if (dim < 1) throw std::invalid_argument("potential dimension must be >= 1");
  PotentialSpec spec;
  spec.dim = dim;
  spec.name = name;
  spec.parameters = parameters;
  if (name == "quadratic") {
    double kappa = 1.0;
    if (auto it = parameters.find("kappa"); it != parameters.end()) kappa = it->second;
    spec.field = std::make_shared<Quadratic>(kappa);
  } else if (name == "double_well") {
    if (!parameters.empty()) {
      throw std::invalid_argument("double_well takes no parameters");
    }
    spec.field = std::make_shared<DoubleWell>();
  } else {
    throw std::invalid_argument("unknown potential: " + name);
  }
  return spec;
}

std::vector<double> grad_at(const PotentialSpec& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.dim) {
    throw std::invalid_argument("grad: point dimension mismatch");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("grad: non-finite input");
  }
  std::vector<double> out(x.size());
  p.field->grad(x, out);
  return out;
}

namespace {

// -(x - y) . (grad U(x) - grad U(y))
double dissipativity_lhs(const Potential& u, std::span<const double> x,
                         std::span<const double> y, std::vector<double>& gx,
                         std::vector<double>& gy) {
  u.grad(x, gx);
  u.grad(y, gy);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += (x[i] - y[i]) * (gx[i] - gy[i]);
  }
  return -s;
}

struct MarginTracker {
  double near = std::numeric_limits<double>::infinity();
  double far = std::numeric_limits<double>::infinity();

  void observe(const Certificate& c, double r2, double lhs) {
    const double r = std::sqrt(r2);
    if (r <= c.R) {
      const double margin = c.M * r2 - lhs;
      if (margin < near) near = margin;
    } else {
      const double margin = -c.m * r2 - lhs;
      if (margin < far) far = margin;
    }
  }
};

// Uniform point in the ball of given radius (normal direction, radial cdf).
void sample_in_ball(RandomStream& rs, double radius, std::span<double> out) {
  double n2 = 0.0;
  for (auto& v : out) {
    v = rs.normal();
    n2 += v * v;
  }
  const double norm = std::sqrt(n2);
  const double u = rs.uniform01();
  const double scale =
      norm > 0.0 ? radius * std::pow(u, 1.0 / static_cast<double>(out.size())) / norm : 0.0;
  for (auto& v : out) v *= scale;
}

}  // namespace

CertificateReport verify_certificate(const PotentialSpec& p, const Certificate& c,
                                     std::int64_t n_pairs, double radius,
                                     std::uint64_t seed) {
  c.validate();
  if (n_pairs < 1) throw std::invalid_argument("verify_certificate: n_pairs >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("verify_certificate: radius > 0");

  const int d = p.dim;
  std::vector<double> x(d), y(d), gx(d), gy(d);
  MarginTracker worst;

  // Random pairs, one stream lane per pair: the worst-margin reduction is
  // order-free, so any sharding yields the same report.
  for (std::int64_t i = 0; i < n_pairs; ++i) {
    RandomStream rs(seed, StreamTag::kCertificatePairs, static_cast<std::uint64_t>(i));
    sample_in_ball(rs, radius, x);
    sample_in_ball(rs, radius, y);
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double dk = x[k] - y[k];
      r2 += dk * dk;
    }
    if (r2 == 0.0) continue;
    worst.observe(c, r2, dissipativity_lhs(*p.field, x, y, gx, gy));
  }

  // Deterministic stress pairs straddling |x - y| = R: both branches are
  // exercised arbitrarily close to the split radius, along the first axis
  // and the diagonal, at several centers.
  const double deltas[] = {1e-6, 1e-4, 1e-2, 0.1 * c.R};
  const double centers[] = {0.0, 0.77, -1.31};
  for (int axis_mode = 0; axis_mode < 2; ++axis_mode) {
    std::vector<double> dir(d, 0.0);
    if (axis_mode == 0) {
      dir[0] = 1.0;
    } else {
      const double inv = 1.0 / std::sqrt(static_cast<double>(d));
      for (auto& v : dir) v = inv;
    }
    for (double center : centers) {
      for (double delta : deltas) {
        for (double sep : {c.R - delta, c.R + delta}) {
          if (!(sep > 0.0)) continue;
          for (int k = 0; k < d; ++k) {
            x[k] = dir[k] * (center + 0.5 * sep);
            y[k] = dir[k] * (center - 0.5 * sep);
          }
          double r2 = 0.0;
          for (int k = 0; k < d; ++k) {
            const double dk = x[k] - y[k];
            r2 += dk * dk;
          }
          worst.observe(c, r2, dissipativity_lhs(*p.field, x, y, gx, gy));
        }
      }
    }
  }

  CertificateReport report;
  report.n_pairs = n_pairs;
  report.seed = seed;
  report.worst_near_margin = worst.near;
  report.worst_far_margin = worst.far;
  report.pass = worst.near >= -1e-9 && worst.far >= -1e-9;
  return report;
}

}  // namespace rclab
