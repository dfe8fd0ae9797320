#pragma once

#include <cstddef>
#include <vector>

#include "ovm/mdp.hpp"

namespace ovm {

/// Per-channel trace of one orchestrated update.
struct ChannelStep {
  double reward = 0.0;       ///< r^(j)
  double current = 0.0;      ///< Q^(j)(s,a) = f^-1(stored) before the update
  double target = 0.0;       ///< U^(j)
  double td_error = 0.0;     ///< U^(j) - Q^(j)(s,a), unclipped
  double clipped_td = 0.0;   ///< td_error clipped into [-K, K]
  double proposal_raw = 0.0; ///< Q^(j) + beta_reg * clipped_td
  double proposal = 0.0;     ///< proposal_raw clamped into the mapping domain
  double mapped_before = 0.0;
  double mapped_after = 0.0;
  double error = 0.0;        ///< averaging error e^(j)
  bool clipped = false;
  bool clamped = false;
};

struct StepRecord {
  std::size_t step = 0;  ///< global step index t of this update
  std::size_t pair_visits = 0;  ///< visits to (s,a) before this update
  Transition transition;
  std::size_t bootstrap_action = 0;  ///< greedy action of the composed value at s'
  double beta_f = 0.0;
  double beta_reg = 0.0;
  std::vector<double> weights;  ///< channel weights in effect
  std::vector<ChannelStep> channels;
  double composed_td = 0.0;  ///< sum_j w_j (U^(j) - Q^(j))

  bool any_clamped() const {
    for (const auto& c : channels) {
      if (c.clamped) return true;
    }
    return false;
  }
};

}  // namespace ovm
