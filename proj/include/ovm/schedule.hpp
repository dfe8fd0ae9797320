#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace ovm {

/**
 * Learning-rate schedule: either a constant or initial / (1 + n)^exponent,
 * where n is the visit count of the updated pair (per_pair) or the global
 * step count.
 */
struct Schedule {
  enum class Kind { constant, polynomial };

  Kind kind = Kind::constant;
  double initial = 1.0;
  double exponent = 0.0;
  bool per_pair = true;

  static Schedule constant(double value) {
    Schedule s{Kind::constant, value, 0.0, true};
    s.check();
    return s;
  }

  static Schedule polynomial(double initial, double exponent, bool per_pair = true) {
    Schedule s{Kind::polynomial, initial, exponent, per_pair};
    s.check();
    return s;
  }

  double operator()(std::size_t pair_visits, std::size_t step) const {
    if (kind == Kind::constant) return initial;
    const double n = static_cast<double>(per_pair ? pair_visits : step);
    return initial / std::pow(1.0 + n, exponent);
  }

  void check() const {
    if (!(initial > 0.0 && initial <= 1.0)) {
      throw std::invalid_argument("schedule values must lie in (0, 1]");
    }
    if (kind == Kind::polynomial && !(exponent >= 0.0)) {
      throw std::invalid_argument("polynomial schedule exponent must be nonnegative");
    }
  }

  /// Decay exponent of the schedule (0 for constants).
  double decay() const { return kind == Kind::constant ? 0.0 : exponent; }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// beta_f and beta_reg; the regular-space rate is their product.
struct LearningRates {
  Schedule beta_f = Schedule::polynomial(1.0, 0.8);
  Schedule beta_reg = Schedule::constant(1.0);

  /**
   * The product decays like n^-p with p = sum of exponents; it satisfies
   * sum = inf, sum of squares < inf and -> 0 exactly when p in (0.5, 1].
   */
  bool satisfies_convergence_conditions() const {
    const double p = beta_f.decay() + beta_reg.decay();
    return p > 0.5 && p <= 1.0;
  }

  friend bool operator==(const LearningRates&, const LearningRates&) = default;
};

}  // namespace ovm
