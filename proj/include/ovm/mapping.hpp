#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "ovm/core.hpp"

namespace ovm {

enum class MappingKind { identity, linear, log, loglin, custom };
enum class Direction { increasing, decreasing };
enum class Curvature { semi_convex, semi_concave, linear };

inline std::string_view to_string(MappingKind kind) {
  switch (kind) {
    case MappingKind::identity: return "identity";
    case MappingKind::linear: return "linear";
    case MappingKind::log: return "log";
    case MappingKind::loglin: return "loglin";
    case MappingKind::custom: return "custom";
  }
  return "?";
}

inline std::string_view to_string(Curvature curvature) {
  switch (curvature) {
    case Curvature::semi_convex: return "semi_convex";
    case Curvature::semi_concave: return "semi_concave";
    case Curvature::linear: return "linear";
  }
  return "?";
}

/// Bounds 0 < lower <= |f'(x)| <= upper on the mapping domain.
struct DerivativeBounds {
  double lower = 1.0;
  double upper = 1.0;
};

/// Forward/inverse pair supplied by the caller for a custom mapping.
struct CustomMapping {
  std::string name;
  std::function<double(double)> forward;
  std::function<double(double)> inverse;
};

inline constexpr Interval kDefaultIdentityDomain{-1e6, 1e6};
inline constexpr Interval kDefaultLogDomain{0.0, 1e6};

/**
 * A strictly monotone, bounded-slope bijection f: [c1, c2] -> f([c1, c2])
 * with single-signed curvature. Values are immutable after construction.
 *
 * Built-ins evaluate in closed form; custom mappings dispatch through the
 * caller's std::function pair and carry declared (not measured) metadata,
 * so they should be passed through validate() before use.
 */
class MappingFunction {
 public:
  double forward(double x) const {
    switch (kind_) {
      case MappingKind::identity: return x;
      case MappingKind::linear: return slope_ * x + intercept_;
      case MappingKind::log: return c_ * std::log(x + d_);
      case MappingKind::loglin:
        return x <= break_point_ ? c_ * std::log(x + d_) : c_ * (x - break_point_);
      case MappingKind::custom: return custom_->forward(x);
    }
    return x;
  }

  double inverse(double y) const {
    switch (kind_) {
      case MappingKind::identity: return y;
      case MappingKind::linear: return (y - intercept_) / slope_;
      case MappingKind::log: return std::exp(y / c_) - d_;
      case MappingKind::loglin:
        return y <= 0.0 ? std::exp(y / c_) - d_ : y / c_ + break_point_;
      case MappingKind::custom: return custom_->inverse(y);
    }
    return y;
  }

  MappingKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const Interval& domain() const { return domain_; }
  Direction direction() const { return direction_; }
  Curvature curvature() const { return curvature_; }
  const DerivativeBounds& derivative_bounds() const { return bounds_; }

  /// delta = upper/lower - 1; exactly zero for linear mappings.
  double delta_ratio() const { return delta_; }

  double slope() const { return slope_; }
  double intercept() const { return intercept_; }
  double c() const { return c_; }
  double d() const { return d_; }
  /// Switch point 1 - d of the log-linear mapping.
  double break_point() const { return break_point_; }

  bool is_linear() const { return curvature_ == Curvature::linear; }

  /// f([c1, c2]) as an ordered interval.
  Interval image() const {
    const double a = forward(domain_.lo);
    const double b = forward(domain_.hi);
    return {std::min(a, b), std::max(a, b)};
  }

  /// Same mapping family and parameters over a different domain.
  MappingFunction with_domain(Interval domain) const;

  static MappingFunction identity(Interval domain = kDefaultIdentityDomain);
  static MappingFunction linear(double slope, double intercept,
                                Interval domain = kDefaultIdentityDomain);
  static MappingFunction log(double c, double d, Interval domain = kDefaultLogDomain);
  static MappingFunction loglin(double c, double d, Interval domain = kDefaultLogDomain);
  static MappingFunction custom(CustomMapping fns, Interval domain, Direction direction,
                                Curvature curvature, DerivativeBounds bounds);

 private:
  MappingFunction() = default;

  static void require_domain(const Interval& domain) {
    if (!(std::isfinite(domain.lo) && std::isfinite(domain.hi)) || !(domain.lo < domain.hi)) {
      throw std::invalid_argument("mapping domain must be a finite interval with lo < hi");
    }
  }

  MappingKind kind_ = MappingKind::identity;
  std::string name_ = "identity";
  Interval domain_ = kDefaultIdentityDomain;
  Direction direction_ = Direction::increasing;
  Curvature curvature_ = Curvature::linear;
  DerivativeBounds bounds_{};
  double delta_ = 0.0;
  double slope_ = 1.0;
  double intercept_ = 0.0;
  double c_ = 0.0;
  double d_ = 0.0;
  double break_point_ = 0.0;
  std::shared_ptr<const CustomMapping> custom_;
};

inline MappingFunction MappingFunction::identity(Interval domain) {
  require_domain(domain);
  MappingFunction f;
  f.domain_ = domain;
  return f;
}

inline MappingFunction MappingFunction::linear(double slope, double intercept,
                                               Interval domain) {
  if (slope == 0.0 || !std::isfinite(slope) || !std::isfinite(intercept)) {
    throw std::invalid_argument("linear mapping requires a finite nonzero slope");
  }
  require_domain(domain);
  MappingFunction f;
  f.kind_ = MappingKind::linear;
  f.name_ = "linear";
  f.domain_ = domain;
  f.slope_ = slope;
  f.intercept_ = intercept;
  f.direction_ = slope > 0 ? Direction::increasing : Direction::decreasing;
  f.bounds_ = {std::abs(slope), std::abs(slope)};
  return f;
}

inline MappingFunction MappingFunction::log(double c, double d, Interval domain) {
  if (!(c > 0.0) || !(d > 0.0) || !std::isfinite(c) || !std::isfinite(d)) {
    throw std::invalid_argument("log mapping requires c > 0 and d > 0");
  }
  require_domain(domain);
  if (domain.lo < 0.0) {
    throw std::invalid_argument("log mapping domain must not extend below 0");
  }
  MappingFunction f;
  f.kind_ = MappingKind::log;
  f.name_ = "log";
  f.domain_ = domain;
  f.c_ = c;
  f.d_ = d;
  f.curvature_ = Curvature::semi_concave;
  f.bounds_ = {c / (domain.hi + d), c / (domain.lo + d)};
  f.delta_ = (domain.hi + d) / (domain.lo + d) - 1.0;
  return f;
}

inline MappingFunction MappingFunction::loglin(double c, double d, Interval domain) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("loglin mapping requires c > 0");
  }
  if (!(d > 0.0 && d < 1.0)) {
    throw std::invalid_argument("loglin mapping requires 0 < d < 1");
  }
  require_domain(domain);
  if (domain.lo < 0.0) {
    throw std::invalid_argument("loglin mapping domain must not extend below 0");
  }
  MappingFunction f;
  f.kind_ = MappingKind::loglin;
  f.name_ = "loglin";
  f.domain_ = domain;
  f.c_ = c;
  f.d_ = d;
  f.break_point_ = 1.0 - d;
  const double b = f.break_point_;
  if (domain.lo >= b) {
    // Entirely on the linear branch.
    f.curvature_ = Curvature::linear;
    f.bounds_ = {c, c};
    f.delta_ = 0.0;
    return f;
  }
  f.curvature_ = Curvature::semi_concave;
  // On the log branch f'(x) = c / (x + d); at the switch point x + d = 1.
  const double upper_slope = c / (domain.lo + d);
  if (domain.hi >= b) {
    f.bounds_ = {c, upper_slope};
    f.delta_ = 1.0 / (domain.lo + d) - 1.0;
  } else {
    f.bounds_ = {c / (domain.hi + d), upper_slope};
    f.delta_ = (domain.hi + d) / (domain.lo + d) - 1.0;
  }
  return f;
}

inline MappingFunction MappingFunction::custom(CustomMapping fns, Interval domain,
                                               Direction direction, Curvature curvature,
                                               DerivativeBounds bounds) {
  if (!fns.forward || !fns.inverse) {
    throw std::invalid_argument("custom mapping needs both forward and inverse");
  }
  require_domain(domain);
  if (!(bounds.lower > 0.0) || !std::isfinite(bounds.upper) || bounds.upper < bounds.lower) {
    throw std::invalid_argument("custom mapping needs 0 < delta1 <= delta2 < inf");
  }
  if (curvature != Curvature::linear && !(bounds.lower < bounds.upper)) {
    throw std::invalid_argument("nonlinear custom mapping needs delta1 < delta2");
  }
  MappingFunction f;
  f.kind_ = MappingKind::custom;
  f.name_ = fns.name.empty() ? "custom" : fns.name;
  f.domain_ = domain;
  f.direction_ = direction;
  f.curvature_ = curvature;
  f.bounds_ = bounds;
  f.delta_ = curvature == Curvature::linear ? 0.0 : bounds.upper / bounds.lower - 1.0;
  f.custom_ = std::make_shared<const CustomMapping>(std::move(fns));
  return f;
}

inline MappingFunction MappingFunction::with_domain(Interval domain) const {
  switch (kind_) {
    case MappingKind::identity: return identity(domain);
    case MappingKind::linear: return linear(slope_, intercept_, domain);
    case MappingKind::log: return log(c_, d_, domain);
    case MappingKind::loglin: return loglin(c_, d_, domain);
    case MappingKind::custom: {
      require_domain(domain);
      MappingFunction f = *this;
      f.domain_ = domain;
      return f;
    }
  }
  return *this;
}

inline MappingFunction make_identity(Interval domain = kDefaultIdentityDomain) {
  return MappingFunction::identity(domain);
}
inline MappingFunction make_linear(double slope, double intercept,
                                   Interval domain = kDefaultIdentityDomain) {
  return MappingFunction::linear(slope, intercept, domain);
}
inline MappingFunction make_log(double c, double d, Interval domain = kDefaultLogDomain) {
  return MappingFunction::log(c, d, domain);
}
inline MappingFunction make_loglin(double c, double d, Interval domain = kDefaultLogDomain) {
  return MappingFunction::loglin(c, d, domain);
}

inline double delta_ratio(const MappingFunction& f) { return f.delta_ratio(); }

struct ValidationOptions {
  /// Relative slack on the declared slope bounds.
  double slope_slack = 1e-6;
  /// Second-difference sign slack, scaled by the magnitude of the three
  /// function values involved.
  double curvature_slack = 1e-10;
};

struct ValidationReport {
  bool monotone = false;
  bool round_trip = false;
  bool slope_lower = false;
  bool slope_upper = false;
  bool curvature = false;

  double min_slope = 0.0;
  double max_slope = 0.0;
  /// +1 convex, -1 concave, 0 flat within slack, 2 mixed signs.
  int curvature_sign = 0;
  double max_round_trip_error = 0.0;
  std::size_t grid_points = 0;

  bool passed() const {
    return monotone && round_trip && slope_lower && slope_upper && curvature;
  }
};

/**
 * Checks a mapping on a uniform grid over its domain: strict monotonicity in
 * the declared direction, relative round-trip error <= tolerance, central
 * finite-difference slopes within the declared bounds, and second
 * differences consistent with the declared curvature.
 *
 * Failures are reported, never thrown.
 */
inline ValidationReport validate(const MappingFunction& f, std::size_t grid_points,
                                 double tolerance, const ValidationOptions& opts = {}) {
  if (grid_points < 3) throw std::invalid_argument("validate needs at least 3 grid points");

  ValidationReport report;
  report.grid_points = grid_points;

  const Interval dom = f.domain();
  const double h = dom.width() / static_cast<double>(grid_points - 1);
  std::vector<double> xs(grid_points);
  std::vector<double> ys(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    xs[i] = i + 1 == grid_points ? dom.hi : dom.lo + h * static_cast<double>(i);
    ys[i] = f.forward(xs[i]);
  }

  const double sign = f.direction() == Direction::increasing ? 1.0 : -1.0;
  report.monotone = true;
  for (std::size_t i = 1; i < grid_points; ++i) {
    if (!(sign * (ys[i] - ys[i - 1]) > 0.0)) report.monotone = false;
  }

  report.round_trip = true;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double err = std::abs(f.inverse(ys[i]) - xs[i]) / std::max(1.0, std::abs(xs[i]));
    if (!(err <= report.max_round_trip_error)) report.max_round_trip_error = err;
    if (!(err <= tolerance)) report.round_trip = false;
  }

  report.min_slope = std::numeric_limits<double>::infinity();
  report.max_slope = 0.0;
  double min_second = 0.0;
  double max_second = 0.0;
  bool curvature_ok = true;
  for (std::size_t i = 1; i + 1 < grid_points; ++i) {
    const double slope = std::abs((ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]));
    report.min_slope = std::min(report.min_slope, slope);
    report.max_slope = std::max(report.max_slope, slope);

    const double second = ys[i + 1] - 2.0 * ys[i] + ys[i - 1];
    const double slack = opts.curvature_slack *
                         std::max(1.0, std::abs(ys[i + 1]) + 2.0 * std::abs(ys[i]) +
                                           std::abs(ys[i - 1]));
    min_second = std::min(min_second, second + slack);
    max_second = std::max(max_second, second - slack);
    switch (f.curvature()) {
      case Curvature::semi_convex: curvature_ok &= second >= -slack; break;
      case Curvature::semi_concave: curvature_ok &= second <= slack; break;
      case Curvature::linear: curvature_ok &= std::abs(second) <= slack; break;
    }
  }
  report.curvature = curvature_ok;
  report.curvature_sign = max_second > 0.0 && min_second >= 0.0   ? 1
                          : min_second < 0.0 && max_second <= 0.0 ? -1
                          : (max_second > 0.0 && min_second < 0.0) ? 2
                                                                    : 0;

  const auto& bounds = f.derivative_bounds();
  report.slope_lower = report.min_slope >= bounds.lower * (1.0 - opts.slope_slack);
  report.slope_upper = report.max_slope <= bounds.upper * (1.0 + opts.slope_slack);
  return report;
}

}  // namespace ovm
