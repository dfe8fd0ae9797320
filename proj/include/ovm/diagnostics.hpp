#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "ovm/core.hpp"
#include "ovm/mapping.hpp"
#include "ovm/record.hpp"

namespace ovm {

/**
 * Error from averaging in mapping space instead of regular space:
 *   e = f^-1(f(a) + beta_f (f(b) - f(a))) - (a + beta_f (b - a)).
 * Nonnegative for increasing semi-convex (and decreasing semi-concave) f,
 * nonpositive for the other two combinations.
 */
inline double error_term(double a, double b, double beta_f, const MappingFunction& f) {
  const Interval& dom = f.domain();
  if (!dom.contains(a) || !dom.contains(b)) {
    std::ostringstream msg;
    msg << "error_term arguments (" << a << ", " << b << ") outside mapping domain [" << dom.lo
        << ", " << dom.hi << "]";
    throw DomainError(msg.str());
  }
  const double fa = f.forward(a);
  const double fb = f.forward(b);
  return f.inverse(fa + beta_f * (fb - fa)) - (a + beta_f * (b - a));
}

/// Expected sign of error_term: +1, -1, or 0 for linear mappings.
inline int expected_error_sign(const MappingFunction& f) {
  if (f.curvature() == Curvature::linear) return 0;
  const bool convex = f.curvature() == Curvature::semi_convex;
  const bool increasing = f.direction() == Direction::increasing;
  return convex == increasing ? 1 : -1;
}

struct DiagnosticTolerances {
  double bound_slack = 1e-10;
  double sign_slack = 1e-12;
  double self_consistency = 1e-12;
};

struct BoundCheck {
  double error = 0.0;  ///< recomputed e^(j)
  double bound = 0.0;  ///< beta_f * beta_reg * delta^(j) * |clipped TD|
  double slack = 0.0;  ///< bound - |error|
  bool passed = false;
};

/**
 * Per-channel check of |e^(j)| <= beta_f beta_reg delta^(j) |U^(j) - Q^(j)|,
 * recomputing e^(j) from the record. The TD used is the clipped one, which
 * is what actually entered the update.
 */
inline std::vector<BoundCheck> check_error_bound(const StepRecord& record,
                                                 std::span<const MappingFunction> mappings,
                                                 const DiagnosticTolerances& tol = {}) {
  std::vector<BoundCheck> out;
  out.reserve(record.channels.size());
  for (std::size_t j = 0; j < record.channels.size(); ++j) {
    const auto& ch = record.channels[j];
    BoundCheck c;
    c.error = error_term(ch.current, ch.proposal, record.beta_f, mappings[j]);
    c.bound = record.beta_f * record.beta_reg * delta_ratio(mappings[j]) * std::abs(ch.clipped_td);
    c.slack = c.bound - std::abs(c.error);
    c.passed = c.slack >= -tol.bound_slack;
    out.push_back(c);
  }
  return out;
}

/// e_t = sum_j w_j e^(j)_t.
inline double composed_error(const StepRecord& record, std::span<const double> weights) {
  double e = 0.0;
  for (std::size_t j = 0; j < record.channels.size(); ++j) {
    e += weights[j] * record.channels[j].error;
  }
  return e;
}

inline double composed_error(const StepRecord& record) {
  return composed_error(record, record.weights);
}

/// Max-norm distance between two tables of the same shape.
inline double convergence_error(const ValueTable& q, const ValueTable& reference) {
  if (q.num_states() != reference.num_states() || q.num_actions() != reference.num_actions()) {
    throw std::invalid_argument("convergence_error: table shapes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < q.values().size(); ++i) {
    worst = std::max(worst, std::abs(q.values()[i] - reference.values()[i]));
  }
  return worst;
}

inline double mean_abs_error(const ValueTable& q, const ValueTable& reference) {
  if (q.num_states() != reference.num_states() || q.num_actions() != reference.num_actions()) {
    throw std::invalid_argument("mean_abs_error: table shapes differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < q.values().size(); ++i) {
    total += std::abs(q.values()[i] - reference.values()[i]);
  }
  return q.values().empty() ? 0.0 : total / static_cast<double>(q.values().size());
}

struct ErrorSample {
  double error = 0.0;
  double bound = 0.0;
  double slack = 0.0;
  bool clamped = false;
};

struct ChannelSignSummary {
  double min_error = std::numeric_limits<double>::infinity();
  double max_error = -std::numeric_limits<double>::infinity();
  std::size_t steps = 0;           ///< steps entering the sign assertion
  std::size_t clamped_steps = 0;   ///< reported separately, excluded above
  double clamped_min_error = std::numeric_limits<double>::infinity();
  double clamped_max_error = -std::numeric_limits<double>::infinity();
};

/**
 * Streaming audit of the averaging error over a run. Summary statistics are
 * always kept; full per-step series only when `keep_series` is set.
 */
class ErrorAudit {
 public:
  ErrorAudit(std::vector<MappingFunction> mappings, std::vector<double> clip_bounds,
             bool keep_series = true, DiagnosticTolerances tol = {})
      : mappings_(std::move(mappings)),
        clip_bounds_(std::move(clip_bounds)),
        keep_series_(keep_series),
        tol_(tol),
        signs_(mappings_.size()) {
    if (keep_series_) series_.resize(mappings_.size());
    for (const auto& f : mappings_) delta_max_ = std::max(delta_max_, delta_ratio(f));
  }

  void record(const StepRecord& rec) {
    ++steps_;
    const auto checks = check_error_bound(rec, mappings_, tol_);
    for (std::size_t j = 0; j < checks.size(); ++j) {
      const auto& ch = rec.channels[j];
      const auto& c = checks[j];
      max_violation_ = std::max(max_violation_, -c.slack);
      if (!c.passed) ++bound_violations_;
      max_self_inconsistency_ =
          std::max(max_self_inconsistency_, std::abs(c.error - ch.error));
      auto& sign = signs_[j];
      if (ch.clamped) {
        ++sign.clamped_steps;
        sign.clamped_min_error = std::min(sign.clamped_min_error, c.error);
        sign.clamped_max_error = std::max(sign.clamped_max_error, c.error);
      } else {
        ++sign.steps;
        sign.min_error = std::min(sign.min_error, c.error);
        sign.max_error = std::max(sign.max_error, c.error);
      }
      if (ch.clipped) ++clip_events_;
      if (ch.clamped) ++clamp_events_;
      if (keep_series_) series_[j].push_back({c.error, c.bound, c.slack, ch.clamped});
    }

    // Envelope |e_t| <= beta_f beta_reg delta_max sum_j |w_j| K^(j).
    double k_sum = 0.0;
    for (std::size_t j = 0; j < rec.weights.size(); ++j) {
      k_sum += std::abs(rec.weights[j]) * clip_bounds_[j];
    }
    const double e_t = composed_error(rec);
    const double envelope = rec.beta_f * rec.beta_reg * delta_max_ * k_sum;
    envelope_max_violation_ = std::max(envelope_max_violation_, std::abs(e_t) - envelope);
    if (std::abs(e_t) > envelope + tol_.bound_slack) ++envelope_violations_;
    if (keep_series_) {
      composed_.push_back(e_t);
      envelopes_.push_back(envelope);
    }
  }

  std::size_t steps() const { return steps_; }
  std::size_t channels() const { return mappings_.size(); }
  double delta_max() const { return delta_max_; }
  std::size_t clip_events() const { return clip_events_; }
  std::size_t clamp_events() const { return clamp_events_; }
  std::size_t bound_violations() const { return bound_violations_; }
  /// max over steps and channels of |e| - bound (negative when all slack is positive).
  double max_violation() const { return max_violation_; }
  std::size_t envelope_violations() const { return envelope_violations_; }
  double envelope_max_violation() const { return envelope_max_violation_; }
  double max_self_inconsistency() const { return max_self_inconsistency_; }
  const ChannelSignSummary& sign_summary(std::size_t j) const { return signs_[j]; }
  const MappingFunction& mapping(std::size_t j) const { return mappings_[j]; }
  const DiagnosticTolerances& tolerances() const { return tol_; }

  const std::vector<ErrorSample>& series(std::size_t j) const { return series_.at(j); }
  const std::vector<double>& composed_series() const { return composed_; }
  const std::vector<double>& envelope_series() const { return envelopes_; }

 private:
  std::vector<MappingFunction> mappings_;
  std::vector<double> clip_bounds_;
  bool keep_series_;
  DiagnosticTolerances tol_;
  double delta_max_ = 0.0;

  std::size_t steps_ = 0;
  std::size_t clip_events_ = 0;
  std::size_t clamp_events_ = 0;
  std::size_t bound_violations_ = 0;
  double max_violation_ = -std::numeric_limits<double>::infinity();
  std::size_t envelope_violations_ = 0;
  double envelope_max_violation_ = -std::numeric_limits<double>::infinity();
  double max_self_inconsistency_ = 0.0;
  std::vector<ChannelSignSummary> signs_;
  std::vector<std::vector<ErrorSample>> series_;
  std::vector<double> composed_;
  std::vector<double> envelopes_;
};

/**
 * Passes iff every non-clamped e^(j) in the run is >= -slack, or every one is
 * <= +slack. Steps where domain clamping fired are excluded and reported in
 * the sign summary.
 */
inline bool check_sign_constancy(const ErrorAudit& audit, std::size_t channel) {
  const auto& s = audit.sign_summary(channel);
  if (s.steps == 0) return true;
  const double slack = audit.tolerances().sign_slack;
  return s.min_error >= -slack || s.max_error <= slack;
}

inline bool check_sign_constancy(const ErrorAudit& audit) {
  for (std::size_t j = 0; j < audit.channels(); ++j) {
    if (!check_sign_constancy(audit, j)) return false;
  }
  return true;
}

/// |e_t| <= beta_f beta_reg delta_max K_sum held on every recorded step.
inline bool error_decay_check(const ErrorAudit& audit) {
  return audit.envelope_violations() == 0;
}

}  // namespace ovm
