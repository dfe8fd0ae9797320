#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ovm/core.hpp"
#include "ovm/decompose.hpp"
#include "ovm/diagnostics.hpp"
#include "ovm/mapping.hpp"
#include "ovm/mdp.hpp"
#include "ovm/record.hpp"
#include "ovm/schedule.hpp"

namespace ovm {

/**
 * Per-channel return bounds [lo, hi] / (1 - gamma) from the channel reward
 * bounds over `rewards`. Degenerate intervals (a channel that is constant on
 * the reward range) are widened to [lo, lo + 1] so a mapping can be attached.
 */
inline std::vector<Interval> channel_return_bounds(const Decomposition& d, Interval rewards,
                                                   double gamma) {
  std::vector<Interval> out;
  for (const auto& b : d.channel_reward_bounds(rewards)) {
    Interval v = return_bounds(b, gamma);
    if (!(v.hi > v.lo)) v.hi = v.lo + 1.0;
    out.push_back(v);
  }
  return out;
}

/// clamp(0, lo + 1e-6, hi - 1e-6).
inline double default_q_init(const Interval& domain) {
  return std::clamp(0.0, domain.lo + 1e-6, domain.hi - 1e-6);
}

struct LearnerConfig {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  double gamma = 0.9;
  Decomposition decomposition = make_trivial();
  std::vector<MappingFunction> mappings;
  LearningRates rates{};
  /// Regular-space initial value per channel; defaults to default_q_init.
  std::vector<double> q_init;
  /// TD clip bound K^(j) per channel; defaults to the mapping domain width.
  std::vector<double> clip_bounds;
  /// Clamp the regular-space proposal into the mapping domain. When false an
  /// escaping proposal raises DomainError instead.
  bool clamp_proposals = true;
};

/// Time-varying channel weights that must be constant from `settle_step` on.
struct WeightSchedule {
  std::function<std::vector<double>(std::size_t)> weights;
  std::size_t settle_step = 0;
};

/// Q(s,a) <- Q(s,a) + alpha (r + gamma max_a' Q(s',a') - Q(s,a)).
inline void q_learning_step(ValueTable& q, const Transition& tr, double alpha, double gamma) {
  const double target = tr.reward + gamma * max_value(q.row(tr.next_state));
  double& v = q(tr.state, tr.action);
  v = v + alpha * (target - v);
}

/**
 * Mapped-space averaging of mapped targets:
 *   Q~(s,a) <- (1 - alpha) Q~(s,a) + alpha f(r + gamma max_a' f^-1(Q~(s',a'))).
 * Its fixed point is the biased table returned by naive_fixed_point.
 */
inline void naive_mapped_step(ValueTable& mapped, const Transition& tr, double alpha, double gamma,
                              const MappingFunction& f) {
  double best = -std::numeric_limits<double>::infinity();
  for (double v : mapped.row(tr.next_state)) best = std::max(best, f.inverse(v));
  const double target = tr.reward + gamma * best;
  if (!f.domain().contains(target)) {
    std::ostringstream msg;
    msg << "naive mapped step: target " << target << " outside mapping domain";
    throw DomainError(msg.str());
  }
  double& v = mapped(tr.state, tr.action);
  v = (1.0 - alpha) * v + alpha * f.forward(target);
}

/**
 * Orchestrated value mapping over decomposed rewards.
 *
 * Keeps one mapped table per reward channel. Each update bootstraps every
 * channel from the greedy action of the composed value
 * Q = sum_j w_j f_j^-1(Q~^(j)), averages in regular space with beta_reg
 * (after clipping the TD to [-K, K] and clamping to the mapping domain) and
 * then in mapping space with beta_f.
 *
 * Not safe for concurrent step() calls; distinct instances are independent.
 */
class OrchestratedLearner {
 public:
  explicit OrchestratedLearner(LearnerConfig config) : cfg_(std::move(config)) {
    const std::size_t L = cfg_.decomposition.size();
    if (cfg_.num_states == 0 || cfg_.num_actions == 0) {
      throw std::invalid_argument("learner needs at least one state and one action");
    }
    if (!(cfg_.gamma >= 0.0 && cfg_.gamma < 1.0)) {
      throw std::invalid_argument("learner discount must satisfy 0 <= gamma < 1");
    }
    if (cfg_.mappings.size() != L) {
      throw std::invalid_argument("need exactly one mapping per decomposition channel");
    }
    cfg_.rates.beta_f.check();
    cfg_.rates.beta_reg.check();

    if (cfg_.q_init.empty()) {
      for (const auto& f : cfg_.mappings) cfg_.q_init.push_back(default_q_init(f.domain()));
    }
    if (cfg_.q_init.size() != L) throw std::invalid_argument("q_init needs one value per channel");
    if (cfg_.clip_bounds.empty()) {
      for (const auto& f : cfg_.mappings) cfg_.clip_bounds.push_back(f.domain().width());
    }
    if (cfg_.clip_bounds.size() != L) {
      throw std::invalid_argument("clip_bounds needs one value per channel");
    }

    tables_.reserve(L);
    for (std::size_t j = 0; j < L; ++j) {
      const auto& f = cfg_.mappings[j];
      if (!f.domain().contains(cfg_.q_init[j])) {
        std::ostringstream msg;
        msg << "q_init " << cfg_.q_init[j] << " for channel " << j << " outside mapping domain ["
            << f.domain().lo << ", " << f.domain().hi << "]";
        throw DomainError(msg.str());
      }
      if (!(cfg_.clip_bounds[j] >= 0.0)) throw std::invalid_argument("clip bounds must be >= 0");
      tables_.emplace_back(cfg_.num_states, cfg_.num_actions, f.forward(cfg_.q_init[j]));
    }
    visits_ = std::vector<std::size_t>(cfg_.num_states * cfg_.num_actions, 0);
    channel_rewards_.resize(L);
    composed_row_.resize(cfg_.num_actions);
  }

  std::size_t num_states() const { return cfg_.num_states; }
  std::size_t num_actions() const { return cfg_.num_actions; }
  std::size_t num_channels() const { return tables_.size(); }
  std::size_t step_count() const { return step_; }
  const LearnerConfig& config() const { return cfg_; }
  const std::vector<MappingFunction>& mappings() const { return cfg_.mappings; }
  const Decomposition& decomposition() const { return cfg_.decomposition; }
  const ValueTable& mapped_table(std::size_t j) const { return tables_[j]; }
  std::size_t visits(std::size_t s, std::size_t a) const {
    return visits_[s * cfg_.num_actions + a];
  }

  /// Channel weights in effect at step t.
  std::vector<double> weights_at(std::size_t t) const {
    if (!schedule_) return cfg_.decomposition.weights();
    if (t >= schedule_->settle_step) return settled_;
    auto w = schedule_->weights(t);
    check_weights(w);
    return w;
  }
  std::vector<double> current_weights() const { return weights_at(step_); }

  /**
   * Installs time-varying weights. Rejects schedules whose value changes at
   * any probe step at or after `settle_step`, or that emit vectors of the
   * wrong length (or, for ensembles, not summing to one).
   */
  void set_weight_schedule(WeightSchedule schedule) {
    if (!schedule.weights) throw std::invalid_argument("empty weight schedule");
    const std::size_t T = schedule.settle_step;
    auto settled = schedule.weights(T);
    check_weights(settled);
    std::vector<std::size_t> probes;
    for (std::size_t k = 1; k <= 64; ++k) probes.push_back(T + k);
    for (std::size_t k = 7; k < 40; k += 3) probes.push_back(T + (std::size_t{1} << k) + k);
    probes.push_back(2 * T + 1);
    probes.push_back(10 * T + 3);
    for (std::size_t t : probes) {
      if (schedule.weights(t) != settled) {
        throw std::invalid_argument("weight schedule does not settle after the settling step");
      }
    }
    for (std::size_t t = 0; t < T; t += std::max<std::size_t>(1, T / 64)) {
      check_weights(schedule.weights(t));
    }
    settled_ = std::move(settled);
    schedule_ = std::move(schedule);
  }

  /// Regular-space value of channel j: f_j^-1(Q~^(j)(s,a)).
  double channel_value(std::size_t j, std::size_t s, std::size_t a) const {
    return cfg_.mappings[j].inverse(tables_[j](s, a));
  }

  double q_value(std::size_t s, std::size_t a) const {
    return compose(s, a, current_weights());
  }

  /// Composed table over all (s, a) with the current weights.
  ValueTable q_table() const {
    const auto w = current_weights();
    ValueTable q(cfg_.num_states, cfg_.num_actions);
    for (std::size_t s = 0; s < cfg_.num_states; ++s) {
      for (std::size_t a = 0; a < cfg_.num_actions; ++a) q(s, a) = compose(s, a, w);
    }
    return q;
  }

  std::size_t greedy_action(std::size_t s) const {
    const auto w = current_weights();
    std::vector<double> row(cfg_.num_actions);
    for (std::size_t a = 0; a < cfg_.num_actions; ++a) row[a] = compose(s, a, w);
    return argmax(row);
  }

  /// Uniform random action with probability epsilon, else greedy.
  template <class Rng>
  std::size_t select_action(std::size_t s, double epsilon, Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < epsilon) {
      return std::uniform_int_distribution<std::size_t>(0, cfg_.num_actions - 1)(rng);
    }
    return greedy_action(s);
  }

  StepRecord step(const Transition& tr) {
    if (tr.state >= cfg_.num_states || tr.next_state >= cfg_.num_states ||
        tr.action >= cfg_.num_actions) {
      throw std::out_of_range("transition index out of range");
    }
    const std::size_t L = tables_.size();
    std::size_t& n = visits_[tr.state * cfg_.num_actions + tr.action];

    StepRecord rec;
    rec.step = step_;
    rec.pair_visits = n;
    rec.transition = tr;
    rec.beta_f = cfg_.rates.beta_f(n, step_);
    rec.beta_reg = cfg_.rates.beta_reg(n, step_);
    rec.weights = current_weights();
    rec.channels.resize(L);
    cfg_.decomposition.decompose_into(tr.reward, channel_rewards_);

    for (std::size_t a = 0; a < cfg_.num_actions; ++a) {
      composed_row_[a] = compose(tr.next_state, a, rec.weights);
    }
    rec.bootstrap_action = argmax(composed_row_);

    const double rate = rec.beta_f * rec.beta_reg;
    for (std::size_t j = 0; j < L; ++j) {
      const auto& f = cfg_.mappings[j];
      const Interval& dom = f.domain();
      auto& ch = rec.channels[j];
      double& stored = tables_[j](tr.state, tr.action);

      ch.reward = channel_rewards_[j];
      ch.mapped_before = stored;
      ch.current = dom.clamp(f.inverse(stored));
      ch.target = ch.reward + cfg_.gamma * f.inverse(tables_[j](tr.next_state, rec.bootstrap_action));
      ch.td_error = ch.target - ch.current;
      const double k = cfg_.clip_bounds[j];
      ch.clipped_td = std::clamp(ch.td_error, -k, k);
      ch.clipped = ch.clipped_td != ch.td_error;
      ch.proposal_raw = ch.current + rec.beta_reg * ch.clipped_td;
      ch.proposal = dom.clamp(ch.proposal_raw);
      ch.clamped = ch.proposal != ch.proposal_raw;
      if (ch.clamped && !cfg_.clamp_proposals) {
        std::ostringstream msg;
        msg << "channel " << j << " proposal " << ch.proposal_raw << " escapes mapping domain ["
            << dom.lo << ", " << dom.hi << "]";
        throw DomainError(msg.str());
      }

      if (f.is_linear()) {
        // Averaging in mapping space equals averaging in regular space.
        const double next = ch.clamped ? ch.current + rec.beta_f * (ch.proposal - ch.current)
                                       : ch.current + rate * ch.clipped_td;
        stored = f.forward(next);
      } else {
        stored = stored + rec.beta_f * (f.forward(ch.proposal) - stored);
      }
      ch.mapped_after = stored;
      ch.error = error_term(ch.current, ch.proposal, rec.beta_f, f);
      rec.composed_td += rec.weights[j] * ch.td_error;
    }

    ++n;
    ++step_;
    return rec;
  }

 private:
  double compose(std::size_t s, std::size_t a, const std::vector<double>& w) const {
    double q = 0.0;
    for (std::size_t j = 0; j < tables_.size(); ++j) {
      q += w[j] * cfg_.mappings[j].inverse(tables_[j](s, a));
    }
    return q;
  }

  void check_weights(const std::vector<double>& w) const {
    if (w.size() != tables_.size()) {
      throw std::invalid_argument("weight vector length does not match channel count");
    }
    if (cfg_.decomposition.weights_sum_to_one()) {
      double total = 0.0;
      for (double x : w) total += x;
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("ensemble weights must keep summing to one");
      }
    }
  }

  LearnerConfig cfg_;
  std::vector<ValueTable> tables_;
  std::vector<std::size_t> visits_;
  std::size_t step_ = 0;
  std::optional<WeightSchedule> schedule_;
  std::vector<double> settled_;
  std::vector<double> channel_rewards_;
  std::vector<double> composed_row_;
};

}  // namespace ovm
