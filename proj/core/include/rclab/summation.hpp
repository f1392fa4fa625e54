#pragma once

// Compensated summation and simple moment accumulators.
//
// Reductions over many paths must agree across worker counts, so all
// aggregation happens in fixed index order with Neumaier compensation;
// the compensation also keeps cross-route identity checks tight.

#include <cmath>
#include <cstdint>

namespace rclab {

struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }

  // Fold another accumulator in (used for fixed-order block reduction).
  void merge(const NeumaierSum& other) {
    add(other.sum);
    add(other.comp);
  }
};

// First/second moment pair for mean and CLT standard error.
struct MomentSums {
  NeumaierSum s1;
  NeumaierSum s2;
  std::int64_t n = 0;

  void add(double v) {
    s1.add(v);
    s2.add(v * v);
    ++n;
  }

  void merge(const MomentSums& other) {
    s1.add(other.s1.value());
    s2.add(other.s2.value());
    n += other.n;
  }

  double mean() const { return n > 0 ? s1.value() / static_cast<double>(n) : 0.0; }

  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double v = (s2.value() - static_cast<double>(n) * m * m) /
                     static_cast<double>(n - 1);
    return v > 0.0 ? v : 0.0;
  }

  double std_error() const {
    return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

}  // namespace rclab
