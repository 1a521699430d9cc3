#include "aepo/controller.hpp"

#include <cmath>

#include "aepo/error.hpp"

namespace aepo {

void ControllerConfig::validate(int vocab_size) const {
  if (!(t_low > 0.0 && t_low < 1.0 && t_high > 1.0) || !std::isfinite(t_high)) {
    throw InvalidInput("controller temperatures must satisfy 0 < t_low < 1 < t_high");
  }
  if (!(target_entropy > 0.0 && target_entropy < std::log(static_cast<double>(vocab_size)))) {
    throw InvalidInput("target entropy must lie in (0, log V)");
  }
  if (mix_count < 0 || mix_count > sample_budget) {
    throw InvalidInput("controller requires 0 <= mix_count <= sample_budget");
  }
  if (!(deadband >= 0.0)) throw InvalidInput("deadband must be >= 0");
  if (fixed_temperature) Temperature{*fixed_temperature};
}

EntropyEstimate batch_entropy(std::span<const Rollout> rollouts) {
  if (rollouts.empty()) throw ContractError("batch_entropy needs at least one rollout");
  EntropyEstimate est;
  double sum = 0.0;
  for (const Rollout& r : rollouts) {
    if (r.token_entropies.size() != r.tokens.size() || r.tokens.empty()) {
      throw ContractError("rollout is missing token entropies");
    }
    sum += r.mean_token_entropy();
    est.token_count += r.token_entropies.size();
  }
  est.value = sum / static_cast<double>(rollouts.size());
  return est;
}

EntropyEstimate batch_entropy(std::span<const RolloutGroup> groups) {
  std::vector<Rollout> all;
  for (const auto& g : groups) all.insert(all.end(), g.rollouts.begin(), g.rollouts.end());
  return batch_entropy(all);
}

Temperature select_temperature(const EntropyEstimate& est, const ControllerConfig& cfg,
                               std::optional<Temperature> previous) {
  if (previous && cfg.deadband > 0.0 && std::abs(est.value - cfg.target_entropy) < cfg.deadband) {
    return *previous;
  }
  return Temperature(est.value < cfg.target_entropy ? cfg.t_high : cfg.t_low);
}

PositiveBatch collect_positive_samples(const LogitTable& policy_old, Temperature t, const Task& task,
                                       int mix_count, int sample_budget, std::uint64_t seed, std::uint64_t step) {
  if (sample_budget < mix_count) throw InvalidInput("sample_budget must be >= mix_count");
  PositiveBatch out;
  while (static_cast<int>(out.rollouts.size()) < mix_count && out.draws < sample_budget) {
    RngStream rng(seed, StreamPurpose::kRegDraw, step, static_cast<std::uint64_t>(out.draws));
    ++out.draws;
    const Query q = task.sample_query(rng);
    Rollout r = sample_response(policy_old, task.vocab(), q.id, t, task.response_len(), rng);
    r.reward = task.verify(q, r.tokens);
    if (*r.reward == 1) out.rollouts.push_back(std::move(r));
  }
  return out;
}

std::vector<RolloutGroup> collect_reg_groups(const LogitTable& policy_old, Temperature t, const Task& task,
                                             int num_groups, int group_size, std::uint64_t seed,
                                             std::uint64_t step) {
  std::vector<RolloutGroup> groups;
  groups.reserve(static_cast<std::size_t>(num_groups));
  for (int gi = 0; gi < num_groups; ++gi) {
    RngStream qrng(seed, StreamPurpose::kRegGroupQuery, step, static_cast<std::uint64_t>(gi));
    const Query q = task.sample_query(qrng);
    std::vector<Rollout> rollouts;
    for (int i = 0; i < group_size; ++i) {
      RngStream rng(seed, StreamPurpose::kRegGroupRollout, step, static_cast<std::uint64_t>(gi),
                    static_cast<std::uint64_t>(i));
      Rollout r = sample_response(policy_old, task.vocab(), q.id, t, task.response_len(), rng);
      r.reward = task.verify(q, r.tokens);
      rollouts.push_back(std::move(r));
    }
    groups.push_back(make_group(q.id, std::move(rollouts)));
  }
  return groups;
}

}  // namespace aepo
