#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ovm/core.hpp"

namespace ovm {

/// One reward channel r -> r^(j).
struct Channel {
  std::function<double(double)> fn;
  /// Image of fn over the decomposition's admissible reward range.
  Interval declared_bounds = Interval::unbounded();
  /// Nondecreasing or nonincreasing in r; lets bounds be tightened by
  /// evaluating the endpoints of a narrower reward interval.
  bool monotone = false;
};

/**
 * Linear reward decomposition r = sum_j weight_j * r^(j).
 *
 * Immutable after construction. Use the make_* builders; user-supplied
 * channels go through make_custom_decomposition, which checks the
 * reconstruction identity on a grid before accepting them.
 */
class Decomposition {
 public:
  Decomposition(std::string name, std::vector<double> weights, std::vector<Channel> channels,
                Interval reward_range, bool weights_sum_to_one = false)
      : name_(std::move(name)),
        weights_(std::move(weights)),
        channels_(std::move(channels)),
        reward_range_(reward_range),
        weights_sum_to_one_(weights_sum_to_one) {
    if (weights_.empty() || weights_.size() != channels_.size()) {
      throw std::invalid_argument("decomposition needs one weight per channel and L >= 1");
    }
    for (double w : weights_) {
      if (w == 0.0 || !std::isfinite(w)) {
        throw std::invalid_argument("decomposition weights must be finite and nonzero");
      }
    }
  }

  const std::string& name() const { return name_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const Interval& reward_range() const { return reward_range_; }
  /// Ensemble-style decomposition whose weights must keep summing to one.
  bool weights_sum_to_one() const { return weights_sum_to_one_; }
  const Channel& channel(std::size_t j) const { return channels_[j]; }

  void decompose_into(double r, std::span<double> out) const {
    if (!reward_range_.contains(r)) {
      std::ostringstream msg;
      msg << "reward " << r << " outside admissible range [" << reward_range_.lo << ", "
          << reward_range_.hi << "] of decomposition " << name_;
      throw RangeError(msg.str());
    }
    for (std::size_t j = 0; j < channels_.size(); ++j) out[j] = channels_[j].fn(r);
  }

  std::vector<double> decompose(double r) const {
    std::vector<double> out(size());
    decompose_into(r, out);
    return out;
  }

  double reconstruct(std::span<const double> channel_rewards) const {
    return reconstruct(channel_rewards, weights_);
  }

  static double reconstruct(std::span<const double> channel_rewards,
                            std::span<const double> weights) {
    double r = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) r += weights[j] * channel_rewards[j];
    return r;
  }

  /// Bounds on each channel's reward when raw rewards lie in `rewards`.
  std::vector<Interval> channel_reward_bounds(Interval rewards) const {
    std::vector<Interval> out;
    out.reserve(size());
    for (const auto& ch : channels_) {
      if (ch.monotone && std::isfinite(rewards.lo) && std::isfinite(rewards.hi)) {
        const double a = ch.fn(rewards.lo);
        const double b = ch.fn(rewards.hi);
        out.push_back({std::min(a, b), std::max(a, b)});
      } else {
        out.push_back(ch.declared_bounds);
      }
    }
    return out;
  }

 private:
  std::string name_;
  std::vector<double> weights_;
  std::vector<Channel> channels_;
  Interval reward_range_;
  bool weights_sum_to_one_ = false;
};

/// Largest |sum_j w_j r^(j) - r| over a uniform grid on `range`.
inline double max_reconstruction_error(const Decomposition& d, Interval range,
                                       std::size_t grid_points) {
  std::vector<double> buf(d.size());
  double worst = 0.0;
  const double h = range.width() / static_cast<double>(std::max<std::size_t>(grid_points, 2) - 1);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double r = i + 1 == grid_points ? range.hi : range.lo + h * static_cast<double>(i);
    d.decompose_into(r, buf);
    worst = std::max(worst, std::abs(d.reconstruct(buf) - r));
  }
  return worst;
}

inline Decomposition make_trivial() {
  return Decomposition("trivial", {1.0},
                       {Channel{[](double r) { return r; }, Interval::unbounded(), true}},
                       Interval::unbounded(), true);
}

/// Nonnegative / negative split; r = r^(1) - r^(2).
inline Decomposition make_pos_neg() {
  Channel pos{[](double r) { return r >= 0.0 ? r : 0.0; },
              {0.0, std::numeric_limits<double>::infinity()}, true};
  Channel neg{[](double r) { return r < 0.0 ? -r : 0.0; },
              {0.0, std::numeric_limits<double>::infinity()}, true};
  return Decomposition("pos_neg", {1.0, -1.0}, {std::move(pos), std::move(neg)},
                       Interval::unbounded());
}

enum class LadderStyle {
  /// Each reward lands in exactly one channel, rescaled by that channel's cap.
  exclusive,
  /// Each channel sees the reward clipped to its band, normalized to [0, 1].
  clipped,
};

/**
 * Magnitude decomposition over the ladder 0 < t_1 < ... < t_L on [0, t_L].
 *
 * exclusive: weight_j = t_j, r^(j) = r / t_j on (t_{j-1}, t_j] ([0, t_1] for j=1).
 * clipped:   weight_j = t_j - t_{j-1}, r^(j) = clamp((r - t_{j-1}) / weight_j, 0, 1).
 */
inline Decomposition make_magnitude_ladder(std::vector<double> thresholds, LadderStyle style) {
  if (thresholds.empty()) throw std::invalid_argument("magnitude ladder needs thresholds");
  double prev = 0.0;
  for (double t : thresholds) {
    if (!(t > prev) || !std::isfinite(t)) {
      throw std::invalid_argument("ladder thresholds must be positive and strictly increasing");
    }
    prev = t;
  }

  std::vector<double> weights;
  std::vector<Channel> channels;
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    const double lo = j == 0 ? 0.0 : thresholds[j - 1];
    const double hi = thresholds[j];
    const bool first = j == 0;
    if (style == LadderStyle::exclusive) {
      const double scale = 1.0 / hi;
      weights.push_back(hi);
      channels.push_back(Channel{[=](double r) {
                                   const bool in_band = first ? (r >= 0.0 && r <= hi)
                                                              : (r > lo && r <= hi);
                                   return in_band ? scale * r : 0.0;
                                 },
                                 {0.0, 1.0}, false});
    } else {
      const double width = hi - lo;
      weights.push_back(width);
      channels.push_back(Channel{[=](double r) {
                                   if (r <= lo) return 0.0;
                                   if (r > hi) return 1.0;
                                   return (r - lo) / width;
                                 },
                                 {0.0, 1.0}, true});
    }
  }
  const std::string name =
      style == LadderStyle::exclusive ? "magnitude_exclusive" : "magnitude_clipped";
  return Decomposition(name, std::move(weights), std::move(channels),
                       {0.0, thresholds.back()});
}

/// Three-band magnitude split with weights [1, 10, 100], one active channel.
inline Decomposition make_magnitude_cfg1() {
  auto d = make_magnitude_ladder({1.0, 10.0, 100.0}, LadderStyle::exclusive);
  return {"magnitude_cfg1", d.weights(), {d.channel(0), d.channel(1), d.channel(2)},
          d.reward_range()};
}

/// Three-band magnitude split with weights [1, 9, 90], per-band clipping.
inline Decomposition make_magnitude_cfg2() {
  auto d = make_magnitude_ladder({1.0, 10.0, 100.0}, LadderStyle::clipped);
  return {"magnitude_cfg2", d.weights(), {d.channel(0), d.channel(1), d.channel(2)},
          d.reward_range()};
}

/// L copies of the reward, weighted by `weights` which must sum to one.
inline Decomposition make_ensemble(std::vector<double> weights) {
  if (weights.empty()) throw std::invalid_argument("ensemble needs at least one weight");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("ensemble weights must sum to one");
  }
  std::vector<Channel> channels(
      weights.size(), Channel{[](double r) { return r; }, Interval::unbounded(), true});
  return Decomposition("ensemble", std::move(weights), std::move(channels),
                       Interval::unbounded(), true);
}

/**
 * Accepts caller-defined channels after checking the reconstruction identity
 * on `grid_points` uniformly spaced rewards over `reward_range`.
 */
inline Decomposition make_custom_decomposition(std::string name, std::vector<double> weights,
                                               std::vector<Channel> channels,
                                               Interval reward_range,
                                               std::size_t grid_points = 100000,
                                               double tolerance = 1e-12) {
  if (!(std::isfinite(reward_range.lo) && std::isfinite(reward_range.hi)) ||
      !(reward_range.lo < reward_range.hi)) {
    throw std::invalid_argument("custom decomposition needs a finite reward range");
  }
  Decomposition d(std::move(name), std::move(weights), std::move(channels), reward_range);
  const double err = max_reconstruction_error(d, reward_range, grid_points);
  if (!(err <= tolerance)) {
    std::ostringstream msg;
    msg << "custom decomposition fails reconstruction: max error " << err;
    throw std::invalid_argument(msg.str());
  }
  return d;
}

/// Return bounds [lo, hi] / (1 - gamma) for a channel whose rewards lie in `rewards`.
inline Interval return_bounds(Interval rewards, double gamma) {
  return {rewards.lo / (1.0 - gamma), rewards.hi / (1.0 - gamma)};
}

}  // namespace ovm
