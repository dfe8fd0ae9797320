#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ovm/core.hpp"
#include "ovm/mapping.hpp"

namespace ovm {

struct RewardOutcome {
  double value = 0.0;
  double probability = 0.0;
};

/// The (s, a, r, s') quadruple consumed by one update.
struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

/**
 * Finite MDP with stochastic transitions and finitely supported reward
 * distributions R(r | s, a, s'). Absorbing states are ordinary states that
 * loop to themselves with reward 0.
 *
 * Build one with TabularMdp::Builder; the builder validates every row.
 */
class TabularMdp {
 public:
  class Builder;

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  const Interval& reward_bounds() const { return reward_bounds_; }
  const std::vector<double>& initial() const { return initial_; }

  double transition(std::size_t s, std::size_t a, std::size_t next) const {
    return transition_[index(s, a, next)];
  }
  std::span<const double> transition_row(std::size_t s, std::size_t a) const {
    return {transition_.data() + index(s, a, 0), num_states_};
  }
  const std::vector<RewardOutcome>& rewards(std::size_t s, std::size_t a,
                                            std::size_t next) const {
    return rewards_[index(s, a, next)];
  }
  double expected_reward(std::size_t s, std::size_t a, std::size_t next) const {
    double total = 0.0;
    for (const auto& o : rewards(s, a, next)) total += o.probability * o.value;
    return total;
  }
  double expected_reward(std::size_t s, std::size_t a) const {
    double total = 0.0;
    for (std::size_t n = 0; n < num_states_; ++n) {
      const double p = transition(s, a, n);
      if (p > 0.0) total += p * expected_reward(s, a, n);
    }
    return total;
  }

  /// True when every transition and reward distribution is a point mass.
  bool deterministic() const {
    for (std::size_t i = 0; i < transition_.size(); ++i) {
      const double p = transition_[i];
      if (p != 0.0 && p != 1.0) return false;
      if (p > 0.0 && rewards_[i].size() != 1) return false;
    }
    return true;
  }

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t next) const {
    return (s * num_actions_ + a) * num_states_ + next;
  }

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  double gamma_ = 0.0;
  Interval reward_bounds_{};
  std::vector<double> transition_;
  std::vector<std::vector<RewardOutcome>> rewards_;
  std::vector<double> initial_;
};

class TabularMdp::Builder {
 public:
  Builder(std::size_t num_states, std::size_t num_actions, double gamma) {
    if (num_states == 0 || num_actions == 0) {
      throw std::invalid_argument("MDP needs at least one state and one action");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
      throw std::invalid_argument("MDP discount must satisfy 0 <= gamma < 1");
    }
    mdp_.num_states_ = num_states;
    mdp_.num_actions_ = num_actions;
    mdp_.gamma_ = gamma;
    mdp_.transition_.assign(num_states * num_actions * num_states, 0.0);
    mdp_.rewards_.assign(num_states * num_actions * num_states, {});
  }

  Builder& transition(std::size_t s, std::size_t a, std::size_t next, double p) {
    check(s, a, next);
    mdp_.transition_[mdp_.index(s, a, next)] = p;
    return *this;
  }

  Builder& reward(std::size_t s, std::size_t a, std::size_t next, double value, double p) {
    check(s, a, next);
    auto& outcomes = mdp_.rewards_[mdp_.index(s, a, next)];
    auto it = std::find_if(outcomes.begin(), outcomes.end(),
                           [&](const RewardOutcome& o) { return o.value == value; });
    if (it != outcomes.end()) {
      it->probability += p;
    } else {
      outcomes.push_back({value, p});
    }
    return *this;
  }

  Builder& initial(std::vector<double> distribution) {
    initial_ = std::move(distribution);
    return *this;
  }

  Builder& reward_bounds(Interval bounds) {
    bounds_ = bounds;
    return *this;
  }

  /// Validates and returns the MDP. Missing initial distribution defaults to
  /// uniform; missing reward bounds default to the hull of the support.
  TabularMdp build() const {
    TabularMdp m = mdp_;
    constexpr double kTol = 1e-12;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t s = 0; s < m.num_states_; ++s) {
      for (std::size_t a = 0; a < m.num_actions_; ++a) {
        double row = 0.0;
        for (std::size_t n = 0; n < m.num_states_; ++n) {
          const double p = m.transition_[m.index(s, a, n)];
          if (!(p >= 0.0) || !std::isfinite(p)) fail("negative transition probability", s, a);
          row += p;
          const auto& outcomes = m.rewards_[m.index(s, a, n)];
          if (p > 0.0 && outcomes.empty()) fail("reachable next state without rewards", s, a);
          double mass = 0.0;
          for (const auto& o : outcomes) {
            if (!(o.probability >= 0.0)) fail("negative reward probability", s, a);
            if (!std::isfinite(o.value)) fail("non-finite reward value", s, a);
            mass += o.probability;
            lo = std::min(lo, o.value);
            hi = std::max(hi, o.value);
          }
          if (!outcomes.empty() && std::abs(mass - 1.0) > kTol) {
            fail("reward distribution does not sum to 1", s, a);
          }
        }
        if (std::abs(row - 1.0) > kTol) fail("transition row does not sum to 1", s, a);
      }
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    if (bounds_) {
      if (lo < bounds_->lo || hi > bounds_->hi) {
        throw std::invalid_argument("reward support exceeds declared reward bounds");
      }
      m.reward_bounds_ = *bounds_;
    } else {
      m.reward_bounds_ = {lo, hi};
    }

    if (initial_.empty()) {
      m.initial_.assign(m.num_states_, 1.0 / static_cast<double>(m.num_states_));
    } else {
      if (initial_.size() != m.num_states_) {
        throw std::invalid_argument("initial distribution has wrong length");
      }
      double mass = 0.0;
      for (double p : initial_) {
        if (!(p >= 0.0)) throw std::invalid_argument("negative initial probability");
        mass += p;
      }
      if (std::abs(mass - 1.0) > kTol) {
        throw std::invalid_argument("initial distribution does not sum to 1");
      }
      m.initial_ = initial_;
    }
    return m;
  }

 private:
  void check(std::size_t s, std::size_t a, std::size_t next) const {
    if (s >= mdp_.num_states_ || next >= mdp_.num_states_ || a >= mdp_.num_actions_) {
      throw std::out_of_range("MDP index out of range");
    }
  }
  [[noreturn]] static void fail(const char* what, std::size_t s, std::size_t a) {
    std::ostringstream msg;
    msg << what << " at (s=" << s << ", a=" << a << ")";
    throw std::invalid_argument(msg.str());
  }

  TabularMdp mdp_;
  std::vector<double> initial_;
  std::optional<Interval> bounds_;
};

namespace detail {

template <class Rng>
double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class Rng>
std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last = i;
    if (u < cumulative) return i;
  }
  return last;
}

}  // namespace detail

template <class Rng>
std::size_t sample_initial_state(const TabularMdp& mdp, Rng& rng) {
  return detail::sample_index(mdp.initial(), rng);
}

/// Draws s' ~ P(.|s,a), then r ~ R(.|s,a,s').
template <class Rng>
Transition sample_transition(const TabularMdp& mdp, Rng& rng, std::size_t s, std::size_t a) {
  const std::size_t next = detail::sample_index(mdp.transition_row(s, a), rng);
  const auto& outcomes = mdp.rewards(s, a, next);
  double r = outcomes.front().value;
  if (outcomes.size() > 1) {
    const double u = detail::uniform01(rng);
    double cumulative = 0.0;
    for (const auto& o : outcomes) {
      cumulative += o.probability;
      r = o.value;
      if (u < cumulative) break;
    }
  }
  return {s, a, r, next};
}

/// One exact Bellman optimality backup E[r + gamma max_a' Q(s', a')] at (s, a).
inline double bellman_backup(const TabularMdp& mdp, const ValueTable& q, std::size_t s,
                             std::size_t a) {
  double total = 0.0;
  for (std::size_t n = 0; n < mdp.num_states(); ++n) {
    const double p = mdp.transition(s, a, n);
    if (p == 0.0) continue;
    total += p * (mdp.expected_reward(s, a, n) + mdp.gamma() * max_value(q.row(n)));
  }
  return total;
}

inline constexpr std::size_t kMaxSweeps = 1'000'000;

/**
 * Q* by value iteration on exact expectations. Stops once successive sweeps
 * differ by less than tolerance (1 - gamma) / (2 gamma) in max norm, which
 * bounds the max-norm error of the result by `tolerance`.
 */
inline ValueTable q_star(const TabularMdp& mdp, double tolerance = 1e-10) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("q_star tolerance must be positive");
  const double gamma = mdp.gamma();
  const double stop = gamma == 0.0 ? std::numeric_limits<double>::infinity()
                                   : tolerance * (1.0 - gamma) / (2.0 * gamma);
  ValueTable q(mdp.num_states(), mdp.num_actions());
  ValueTable next = q;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double diff = 0.0;
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        next(s, a) = bellman_backup(mdp, q, s, a);
        diff = std::max(diff, std::abs(next(s, a) - q(s, a)));
      }
    }
    std::swap(q, next);
    if (diff < stop) return q;
  }
  throw ConvergenceError("value iteration did not converge within the sweep cap");
}

/**
 * Fixed point of the naive mapped update: the table Q with
 *   f(Q(s,a)) = E_{s',r}[ f(r + gamma max_a' Q(s', a')) ],
 * returned in regular space. Iteration starts from the clamp of 0 into the
 * domain interior and stops once successive regular-space sweeps differ by
 * less than `tolerance`. Throws DomainError if a target leaves f's domain.
 */
inline ValueTable naive_fixed_point(const TabularMdp& mdp, const MappingFunction& f,
                                    double tolerance = 1e-12,
                                    std::size_t max_sweeps = kMaxSweeps) {
  const Interval dom = f.domain();
  const double q0 = std::clamp(0.0, dom.lo + 1e-6, dom.hi - 1e-6);
  ValueTable q(mdp.num_states(), mdp.num_actions(), q0);
  ValueTable next = q;
  const double gamma = mdp.gamma();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double diff = 0.0;
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        double mapped = 0.0;
        for (std::size_t n = 0; n < mdp.num_states(); ++n) {
          const double p = mdp.transition(s, a, n);
          if (p == 0.0) continue;
          const double bootstrap = gamma * max_value(q.row(n));
          for (const auto& o : mdp.rewards(s, a, n)) {
            const double target = o.value + bootstrap;
            if (!dom.contains(target)) {
              std::ostringstream msg;
              msg << "naive fixed point: target " << target << " escapes mapping domain ["
                  << dom.lo << ", " << dom.hi << "]";
              throw DomainError(msg.str());
            }
            mapped += p * o.probability * f.forward(target);
          }
        }
        next(s, a) = dom.clamp(f.inverse(mapped));
        diff = std::max(diff, std::abs(next(s, a) - q(s, a)));
      }
    }
    std::swap(q, next);
    if (diff < tolerance) return q;
  }
  throw ConvergenceError("naive fixed-point iteration did not converge within the sweep cap");
}

/// Q_naive(s,a) - E[r + gamma max_a' Q_naive(s',a')]; signed by f's curvature.
inline ValueTable jensen_gap(const TabularMdp& mdp, const MappingFunction& f,
                             double tolerance = 1e-12) {
  const ValueTable fixed = naive_fixed_point(mdp, f, tolerance);
  ValueTable gap(mdp.num_states(), mdp.num_actions());
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
      gap(s, a) = fixed(s, a) - bellman_backup(mdp, fixed, s, a);
    }
  }
  return gap;
}

/// One state, one action, gamma = 0, reward 0 or 2 with probability 1/2 each.
inline TabularMdp make_jensen_bandit() {
  return TabularMdp::Builder(1, 1, 0.0)
      .transition(0, 0, 0, 1.0)
      .reward(0, 0, 0, 0.0, 0.5)
      .reward(0, 0, 0, 2.0, 0.5)
      .build();
}

struct RandomMdpSpec {
  std::size_t num_states = 5;
  std::size_t num_actions = 3;
  double gamma = 0.9;
  std::vector<double> reward_support{0.0, 1.0};
  /// Fraction of next states removed from each transition row (at least one kept).
  double sparsity = 0.0;
  /// Number of distinct support points per (s, a, s') reward distribution.
  std::size_t outcomes_per_transition = 2;
};

/**
 * Random MDP: transition rows are normalized exponential draws (a flat
 * Dirichlet), each reachable (s, a, s') gets a reward distribution over
 * `outcomes_per_transition` distinct support points with random weights.
 * Reward bounds are the hull of the support; initial distribution is uniform.
 */
template <class Rng>
TabularMdp make_random_mdp(Rng& rng, const RandomMdpSpec& spec) {
  if (spec.reward_support.empty()) throw std::invalid_argument("empty reward support");
  if (!(spec.sparsity >= 0.0 && spec.sparsity < 1.0)) {
    throw std::invalid_argument("sparsity must lie in [0, 1)");
  }
  std::exponential_distribution<double> expo(1.0);
  const std::size_t n_states = spec.num_states;
  TabularMdp::Builder builder(n_states, spec.num_actions, spec.gamma);
  const std::size_t drop =
      std::min(n_states - 1, static_cast<std::size_t>(spec.sparsity * static_cast<double>(n_states)));
  const std::size_t points = std::max<std::size_t>(
      1, std::min(spec.outcomes_per_transition, spec.reward_support.size()));

  std::vector<std::size_t> order(n_states);
  std::vector<std::size_t> support_order(spec.reward_support.size());
  std::vector<double> weights(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < spec.num_actions; ++a) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::fill(weights.begin(), weights.end(), 0.0);
      double total = 0.0;
      for (std::size_t k = drop; k < n_states; ++k) {
        weights[order[k]] = expo(rng) + 1e-3;
        total += weights[order[k]];
      }
      for (std::size_t n = 0; n < n_states; ++n) {
        if (weights[n] == 0.0) continue;
        builder.transition(s, a, n, weights[n] / total);

        std::iota(support_order.begin(), support_order.end(), 0);
        std::shuffle(support_order.begin(), support_order.end(), rng);
        std::vector<double> mass(points);
        double mass_total = 0.0;
        for (auto& m : mass) mass_total += (m = expo(rng) + 1e-3);
        for (std::size_t k = 0; k < points; ++k) {
          builder.reward(s, a, n, spec.reward_support[support_order[k]], mass[k] / mass_total);
        }
      }
    }
  }
  const auto [lo, hi] =
      std::minmax_element(spec.reward_support.begin(), spec.reward_support.end());
  builder.reward_bounds({*lo, *hi});
  return builder.build();
}

/**
 * Text format, one directive per line, '#' starts a comment:
 *
 *   states <n>
 *   actions <n>
 *   gamma <g>
 *   reward_bounds <lo> <hi>          (optional)
 *   initial <s> <p>                  (optional, sparse; default uniform)
 *   transition <s> <a> <s'> <p>
 *   reward <s> <a> <s'> <value> <p>
 */
inline TabularMdp read_mdp(std::istream& in) {
  std::size_t states = 0;
  std::size_t actions = 0;
  double gamma = -1.0;
  std::optional<Interval> bounds;
  struct Entry {
    std::size_t s, a, n;
    double value, p;
    bool is_reward;
  };
  std::vector<Entry> entries;
  std::vector<std::pair<std::size_t, double>> initial;

  std::string line;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& why) {
    throw ConfigError("MDP file line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    if (key == "states") {
      if (!(fields >> states)) bad("expected state count");
    } else if (key == "actions") {
      if (!(fields >> actions)) bad("expected action count");
    } else if (key == "gamma") {
      if (!(fields >> gamma)) bad("expected discount");
    } else if (key == "reward_bounds") {
      Interval b;
      if (!(fields >> b.lo >> b.hi)) bad("expected two reward bounds");
      bounds = b;
    } else if (key == "initial") {
      std::size_t s;
      double p;
      if (!(fields >> s >> p)) bad("expected <s> <p>");
      initial.emplace_back(s, p);
    } else if (key == "transition") {
      Entry e{};
      if (!(fields >> e.s >> e.a >> e.n >> e.p)) bad("expected <s> <a> <s'> <p>");
      entries.push_back(e);
    } else if (key == "reward") {
      Entry e{};
      e.is_reward = true;
      if (!(fields >> e.s >> e.a >> e.n >> e.value >> e.p)) {
        bad("expected <s> <a> <s'> <value> <p>");
      }
      entries.push_back(e);
    } else {
      bad("unknown directive '" + key + "'");
    }
    std::string extra;
    if (fields >> extra) bad("trailing tokens");
  }
  if (states == 0 || actions == 0) throw ConfigError("MDP file must declare states and actions");
  if (gamma < 0.0) throw ConfigError("MDP file must declare gamma");

  try {
    TabularMdp::Builder builder(states, actions, gamma);
    for (const auto& e : entries) {
      if (e.is_reward) {
        builder.reward(e.s, e.a, e.n, e.value, e.p);
      } else {
        builder.transition(e.s, e.a, e.n, e.p);
      }
    }
    if (!initial.empty()) {
      std::vector<double> dist(states, 0.0);
      for (auto [s, p] : initial) {
        if (s >= states) throw ConfigError("initial state out of range");
        dist[s] += p;
      }
      builder.initial(std::move(dist));
    }
    if (bounds) builder.reward_bounds(*bounds);
    return builder.build();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid MDP: ") + e.what());
  }
}

inline TabularMdp read_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open MDP file '" + path + "'");
  return read_mdp(in);
}

inline void write_mdp(std::ostream& out, const TabularMdp& mdp) {
  out << std::setprecision(17);
  out << "states " << mdp.num_states() << "\n";
  out << "actions " << mdp.num_actions() << "\n";
  out << "gamma " << mdp.gamma() << "\n";
  out << "reward_bounds " << mdp.reward_bounds().lo << " " << mdp.reward_bounds().hi << "\n";
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    if (mdp.initial()[s] > 0.0) out << "initial " << s << " " << mdp.initial()[s] << "\n";
  }
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
      for (std::size_t n = 0; n < mdp.num_states(); ++n) {
        const double p = mdp.transition(s, a, n);
        if (p == 0.0) continue;
        out << "transition " << s << " " << a << " " << n << " " << p << "\n";
        for (const auto& o : mdp.rewards(s, a, n)) {
          out << "reward " << s << " " << a << " " << n << " " << o.value << " "
              << o.probability << "\n";
        }
      }
    }
  }
}

}  // namespace ovm
