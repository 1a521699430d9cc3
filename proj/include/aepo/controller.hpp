#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aepo/algorithms.hpp"
#include "aepo/envs.hpp"
#include "aepo/policy.hpp"

namespace aepo {

struct ControllerConfig {
  double target_entropy = 0.5;  // nats
  double t_high = 1.2;
  double t_low = 0.8;
  int mix_count = 9;
  int sample_budget = 400;
  // Half-width of a no-switch band around the target. 0 reproduces the plain
  // threshold rule.
  double deadband = 0.0;
  // Pins the regularizer temperature and bypasses the feedback rule.
  std::optional<double> fixed_temperature;

  void validate(int vocab_size) const;
};

struct EntropyEstimate {
  double value = 0.0;
  std::size_t token_count = 0;
};

// Mean over rollouts of the mean per-token entropy. The rollouts must be the
// T = 1 group batch; their token_entropies are exact full-distribution values.
EntropyEstimate batch_entropy(std::span<const Rollout> rollouts);
EntropyEstimate batch_entropy(std::span<const RolloutGroup> groups);

// t_high iff est < target (strict), else t_low. With a nonzero deadband the
// previous choice is kept while |est - target| < deadband.
Temperature select_temperature(const EntropyEstimate& est, const ControllerConfig& cfg,
                               std::optional<Temperature> previous = std::nullopt);

struct PositiveBatch {
  std::vector<Rollout> rollouts;
  int draws = 0;
};

// Rejection-samples rollouts at temperature t until mix_count positives are
// found or sample_budget draws are spent. Draw i uses stream
// (seed, kRegDraw, step, i).
PositiveBatch collect_positive_samples(const LogitTable& policy_old, Temperature t, const Task& task,
                                       int mix_count, int sample_budget, std::uint64_t seed, std::uint64_t step);

// num_groups groups of group_size rollouts sampled at temperature t, with
// group-normalized advantages and no reward filtering.
std::vector<RolloutGroup> collect_reg_groups(const LogitTable& policy_old, Temperature t, const Task& task,
                                             int num_groups, int group_size, std::uint64_t seed,
                                             std::uint64_t step);

}  // namespace aepo
