#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "praise/errors.hpp"

namespace praise {

struct AdvantageEstimates {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value, the critic target
};

// Generalized advantage estimation with a zero terminal bootstrap:
// delta_k = r_k + gamma * V_{k+1} - V_k,  A_k = delta_k + gamma * lambda * A_{k+1}.
inline AdvantageEstimates compute_gae(std::span<const double> rewards,
                                      std::span<const double> values, double gamma,
                                      double lambda) {
  if (rewards.size() != values.size()) {
    throw LengthMismatchError("rewards and values must align");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must be in [0, 1]");
  const std::size_t n = rewards.size();
  AdvantageEstimates out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double acc = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = (k + 1 < n) ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_value - values[k];
    acc = delta + gamma * lambda * acc;
    out.advantages[k] = acc;
    out.returns[k] = acc + values[k];
  }
  return out;
}

struct ActorLossResult {
  double loss = 0.0;
  double clip_fraction = 0.0;
  // True where the clip zeroes the gradient: (A > 0 and ratio > 1 + eps) or
  // (A < 0 and ratio < 1 - eps).
  std::vector<bool> clipped;
};

// Clipped surrogate: loss = -mean_k min(ratio_k * A_k, clamp(ratio_k) * A_k).
// With new == old the ratios are exactly 1 and the loss is exactly -mean(A).
inline ActorLossResult actor_loss(std::span<const double> new_logprobs,
                                  std::span<const double> old_logprobs,
                                  std::span<const double> advantages, double epsilon) {
  if (new_logprobs.size() != old_logprobs.size() ||
      new_logprobs.size() != advantages.size()) {
    throw LengthMismatchError("logprobs and advantages must align");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError("clip epsilon must be in (0, 1)");
  }
  const std::size_t n = new_logprobs.size();
  if (n == 0) throw LengthMismatchError("actor loss needs at least one token");
  ActorLossResult out;
  out.clipped.assign(n, false);
  double sum = 0.0;
  std::size_t clipped_count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double diff = new_logprobs[k] - old_logprobs[k];
    const double ratio = (diff == 0.0) ? 1.0 : std::exp(diff);
    const double a = advantages[k];
    const double lo = 1.0 - epsilon;
    const double hi = 1.0 + epsilon;
    const double clamped = ratio < lo ? lo : (ratio > hi ? hi : ratio);
    const double unclipped = ratio * a;
    const double clipped = clamped * a;
    sum += -(unclipped < clipped ? unclipped : clipped);
    const bool zeroed = (a > 0.0 && ratio > hi) || (a < 0.0 && ratio < lo);
    out.clipped[k] = zeroed;
    clipped_count += zeroed ? 1 : 0;
  }
  out.loss = sum / static_cast<double>(n);
  out.clip_fraction = static_cast<double>(clipped_count) / static_cast<double>(n);
  return out;
}

// Critic objective: mean squared error against the GAE returns.
inline double critic_loss(std::span<const double> values,
                          std::span<const double> returns) {
  if (values.size() != returns.size()) {
    throw LengthMismatchError("values and returns must align");
  }
  if (values.empty()) throw LengthMismatchError("critic loss needs at least one token");
  double sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double d = values[k] - returns[k];
    sum += d * d;
  }
  return sum / static_cast<double>(values.size());
}

}  // namespace praise
