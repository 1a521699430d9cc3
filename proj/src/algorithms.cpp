#include "aepo/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "aepo/error.hpp"

namespace aepo {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kReinforce: return "reinforce";
    case Variant::kGrpo: return "grpo";
    case Variant::kEntropyReg: return "entropy_reg";
    case Variant::kEntropyAdv: return "entropy_adv";
    case Variant::kAepo: return "aepo";
    case Variant::kAblateOrigDist: return "ablate_orig_dist";
    case Variant::kAblateAdvWeighted: return "ablate_adv_weighted";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::kReinforce, Variant::kGrpo, Variant::kEntropyReg, Variant::kEntropyAdv,
                    Variant::kAepo, Variant::kAblateOrigDist, Variant::kAblateAdvWeighted}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidInput("unknown algorithm variant '" + name + "'");
}

bool uses_regularizer(Variant v) {
  return v == Variant::kAepo || v == Variant::kAblateOrigDist || v == Variant::kAblateAdvWeighted;
}

void LossConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidInput("epsilon must lie in (0, 1)");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be > 0");
  if (!(kappa > 1.0) || !std::isfinite(kappa)) throw InvalidInput("kappa must be > 1");
}

// --- GradAccumulator -------------------------------------------------------

void GradAccumulator::add(const Context& ctx, std::span<const double> values, double scale) {
  if (values.size() != static_cast<std::size_t>(vocab_size_)) {
    throw InvalidInput("gradient row has wrong length");
  }
  auto [it, inserted] = entries_.try_emplace(ctx, std::vector<double>(values.size(), 0.0));
  auto& row = it->second;
  for (std::size_t i = 0; i < row.size(); ++i) row[i] += scale * values[i];
}

void GradAccumulator::merge(const GradAccumulator& other) {
  if (other.vocab_size_ != vocab_size_) throw InvalidInput("cannot merge accumulators of different width");
  for (const auto& [ctx, row] : other.entries_) add(ctx, row);
}

void GradAccumulator::scale(double factor) {
  for (auto& [ctx, row] : entries_) {
    for (double& v : row) v *= factor;
  }
}

std::span<const double> GradAccumulator::row(const Context& ctx) const {
  auto it = entries_.find(ctx);
  if (it != entries_.end()) return it->second;
  return zeros_;
}

double GradAccumulator::norm() const {
  double s = 0.0;
  for (const auto& [ctx, row] : entries_) {
    for (double v : row) s += v * v;
  }
  return std::sqrt(s);
}

double GradAccumulator::max_abs() const {
  double m = 0.0;
  for (const auto& [ctx, row] : entries_) {
    for (double v : row) m = std::max(m, std::abs(v));
  }
  return m;
}

bool GradAccumulator::all_zero() const {
  for (const auto& [ctx, row] : entries_) {
    for (double v : row) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

const Context* GradAccumulator::find_non_finite() const {
  for (const auto& [ctx, row] : entries_) {
    for (double v : row) {
      if (!std::isfinite(v)) return &ctx;
    }
  }
  return nullptr;
}

// --- advantages and clipping -------------------------------------------------

AdvantageResult group_advantage(std::span<const double> rewards) {
  if (rewards.size() < 2) throw InvalidInput("group_advantage needs a group of at least 2");
  const auto g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / g);

  AdvantageResult out;
  out.advantages.assign(rewards.size(), 0.0);
  if (std < 1e-8) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - mean) / std;
  return out;
}

RolloutGroup make_group(std::uint32_t query_id, std::vector<Rollout> rollouts) {
  std::vector<double> rewards;
  rewards.reserve(rollouts.size());
  for (const auto& r : rollouts) rewards.push_back(static_cast<double>(r.reward_or_throw()));
  AdvantageResult adv = group_advantage(rewards);
  return RolloutGroup{query_id, std::move(rollouts), std::move(adv.advantages), adv.degenerate};
}

ClipResult clipped_weighted(double ratio, double weight, double eps) {
  const double unclipped = ratio * weight;
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * weight;
  if (clipped < unclipped) return {clipped, true};
  return {unclipped, false};
}

// --- surrogate gradients -----------------------------------------------------

namespace {

using TokenWeight = std::function<double(std::size_t)>;

// acc += scale * grad min[r_t w_t, clip(r_t) w_t] summed over the rollout's
// tokens. r_t = pi_new(o_t) / pi_old(o_t), both at T = 1. When the clipped
// branch is selected the term is constant in theta and contributes nothing.
void accumulate_surrogate(GradAccumulator& acc, const LogitTable& policy, const Rollout& ro,
                          const TokenWeight& weight, double scale, double eps, GradStats* stats) {
  if (ro.base_logprobs_old.size() != ro.tokens.size()) {
    throw ContractError("rollout is missing base_logprobs_old");
  }
  const Temperature base(1.0);
  Context ctx{ro.query_id, {}};
  ctx.prefix.reserve(ro.tokens.size());
  for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
    const Token a = ro.tokens[t];
    const double w = weight(t);
    if (w != 0.0) {
      const auto logits = policy.logits(ctx);
      const std::vector<double> lp = log_probs(logits, base);
      const double ratio = std::exp(lp[a] - ro.base_logprobs_old[t]);
      const ClipResult c = clipped_weighted(ratio, w, eps);
      if (stats) {
        ++stats->tokens;
        if (c.clipped) ++stats->clipped;
      }
      if (!c.clipped) {
        std::vector<double> g(lp.size());
        for (std::size_t b = 0; b < g.size(); ++b) g[b] = -std::exp(lp[b]);
        g[a] += 1.0;
        acc.add(ctx, g, scale * w * ratio);
      }
    } else if (stats) {
      ++stats->tokens;
    }
    ctx.prefix.push_back(a);
  }
}

double inv_len(const Rollout& r) {
  return r.tokens.empty() ? 0.0 : 1.0 / static_cast<double>(r.tokens.size());
}

template <typename AdvFn>
GradAccumulator group_surrogate(std::span<const RolloutGroup> groups, const LogitTable& policy, double eps,
                                GradStats* stats, AdvFn&& token_weight) {
  GradAccumulator acc(policy.vocab_size());
  if (groups.empty()) return acc;
  const double per_group = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    if (g.advantages.size() != g.rollouts.size()) throw ContractError("group advantages not computed");
    const double per_rollout = per_group / static_cast<double>(g.rollouts.size());
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const Rollout& ro = g.rollouts[i];
      accumulate_surrogate(
          acc, policy, ro, [&](std::size_t t) { return token_weight(g, i, t); }, per_rollout * inv_len(ro), eps,
          stats);
    }
  }
  return acc;
}

}  // namespace

GradAccumulator grpo_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new, double eps,
                              GradStats* stats) {
  return group_surrogate(groups, policy_new, eps, stats,
                         [](const RolloutGroup& g, std::size_t i, std::size_t) { return g.advantages[i]; });
}

GradAccumulator reinforce_reg_gradient(std::span<const Rollout> reg_rollouts, const LogitTable& policy_new,
                                       double eps, double alpha, GradStats* stats) {
  GradAccumulator acc(policy_new.vocab_size());
  if (reg_rollouts.empty() || alpha == 0.0) return acc;
  const double per_rollout = alpha / static_cast<double>(reg_rollouts.size());
  for (const Rollout& ro : reg_rollouts) {
    const int reward = ro.reward_or_throw();
    if (reward == 0) continue;
    accumulate_surrogate(
        acc, policy_new, ro, [&](std::size_t) { return static_cast<double>(reward); }, per_rollout * inv_len(ro),
        eps, stats);
  }
  return acc;
}

GradAccumulator aepo_gradient(std::span<const RolloutGroup> groups, std::span<const Rollout> reg_rollouts,
                              const LogitTable& policy_new, const LossConfig& cfg, GradStats* stats) {
  GradAccumulator acc = grpo_gradient(groups, policy_new, cfg.epsilon, stats);
  acc.merge(reinforce_reg_gradient(reg_rollouts, policy_new, cfg.epsilon, cfg.alpha, stats));
  return acc;
}

GradAccumulator entropy_bonus_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                       double lambda) {
  GradAccumulator acc(policy_new.vocab_size());
  if (groups.empty() || lambda == 0.0) return acc;
  const double per_group = lambda / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    const double per_rollout = per_group / static_cast<double>(g.rollouts.size());
    for (const Rollout& ro : g.rollouts) {
      const double scale = per_rollout * inv_len(ro);
      Context ctx{ro.query_id, {}};
      for (Token a : ro.tokens) {
        acc.add(ctx, entropy_grad(policy_new.logits(ctx)), scale);
        ctx.prefix.push_back(a);
      }
    }
  }
  return acc;
}

GradAccumulator entropy_reg_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                     double lambda, double eps, GradStats* stats) {
  GradAccumulator acc = grpo_gradient(groups, policy_new, eps, stats);
  acc.merge(entropy_bonus_gradient(groups, policy_new, lambda));
  return acc;
}

double entropy_adv_shaped(double adv, double token_entropy, double beta, double kappa) {
  return adv + std::min(beta * token_entropy, std::abs(adv) / kappa);
}

GradAccumulator entropy_adv_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                     const LossConfig& cfg, GradStats* stats) {
  return group_surrogate(groups, policy_new, cfg.epsilon, stats,
                         [&](const RolloutGroup& g, std::size_t i, std::size_t t) {
                           const Rollout& ro = g.rollouts[i];
                           if (ro.token_entropies.size() != ro.tokens.size()) {
                             throw ContractError("rollout is missing token entropies");
                           }
                           return entropy_adv_shaped(g.advantages[i], ro.token_entropies[t], cfg.beta, cfg.kappa);
                         });
}

GradAccumulator reinforce_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new, double eps,
                                   GradStats* stats) {
  std::vector<Rollout> all;
  for (const auto& g : groups) all.insert(all.end(), g.rollouts.begin(), g.rollouts.end());
  return reinforce_reg_gradient(all, policy_new, eps, 1.0, stats);
}

GradAccumulator adv_weighted_reg_gradient(std::span<const RolloutGroup> reg_groups, const LogitTable& policy_new,
                                          double eps, double alpha, GradStats* stats) {
  if (alpha == 0.0) return GradAccumulator(policy_new.vocab_size());
  GradAccumulator acc = grpo_gradient(reg_groups, policy_new, eps, stats);
  acc.scale(alpha);
  return acc;
}

GradAccumulator ablation_gradient(std::span<const RolloutGroup> groups, std::span<const Rollout> reg_rollouts,
                                  std::span<const RolloutGroup> reg_groups, const LogitTable& policy_new,
                                  const LossConfig& cfg, GradStats* stats) {
  switch (cfg.variant) {
    case Variant::kAblateOrigDist:
      return aepo_gradient(groups, reg_rollouts, policy_new, cfg, stats);
    case Variant::kAblateAdvWeighted: {
      GradAccumulator acc = grpo_gradient(groups, policy_new, cfg.epsilon, stats);
      acc.merge(adv_weighted_reg_gradient(reg_groups, policy_new, cfg.epsilon, cfg.alpha, stats));
      return acc;
    }
    default:
      throw InvalidInput("ablation_gradient called with non-ablation variant " + to_string(cfg.variant));
  }
}

}  // namespace aepo
