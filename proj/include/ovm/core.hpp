#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovm {

/// Raised when a value falls outside the domain of a mapping function.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when a reward lies outside a decomposition's admissible range.
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Raised by fixed-point iterations that exhaust their sweep budget.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration or input file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed real interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr double width() const { return hi - lo; }
  constexpr bool contains(double x) const { return x >= lo && x <= hi; }
  constexpr double clamp(double x) const { return std::clamp(x, lo, hi); }

  static constexpr Interval unbounded() {
    return {-std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

/// Dense |S| x |A| table of reals, row-major by state.
class ValueTable {
 public:
  ValueTable() = default;
  ValueTable(std::size_t num_states, std::size_t num_actions, double fill = 0.0)
      : num_states_(num_states),
        num_actions_(num_actions),
        values_(num_states * num_actions, fill) {}

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  double& operator()(std::size_t s, std::size_t a) {
    return values_[s * num_actions_ + a];
  }
  double operator()(std::size_t s, std::size_t a) const {
    return values_[s * num_actions_ + a];
  }

  std::span<double> row(std::size_t s) {
    return {values_.data() + s * num_actions_, num_actions_};
  }
  std::span<const double> row(std::size_t s) const {
    return {values_.data() + s * num_actions_, num_actions_};
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  friend bool operator==(const ValueTable&, const ValueTable&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
};

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

inline double max_value(std::span<const double> values) {
  return values[argmax(values)];
}

}  // namespace ovm
