#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "aepo/policy.hpp"

namespace aepo {

enum class Variant {
  kReinforce,
  kGrpo,
  kEntropyReg,
  kEntropyAdv,
  kAepo,
  kAblateOrigDist,
  kAblateAdvWeighted,
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
// True for the variants that draw a temperature-adjusted regularizer batch.
bool uses_regularizer(Variant v);

struct LossConfig {
  Variant variant = Variant::kAepo;
  double epsilon = 0.2;
  double alpha = 1.0;
  double lambda = 0.03;
  double beta = 0.4;
  double kappa = 2.0;
  // Include the on-policy term (GRPO / REINFORCE / shaped). Turning it off
  // leaves only the regularizer, for positive-only training experiments.
  bool policy_term = true;

  void validate() const;
};

// Sparse gradient over logit rows. Entries live in a sorted map so that
// iteration, merging and serialization all follow the canonical context order.
class GradAccumulator {
 public:
  using Map = std::map<Context, std::vector<double>>;

  explicit GradAccumulator(int vocab_size)
      : vocab_size_(vocab_size), zeros_(static_cast<std::size_t>(vocab_size), 0.0) {}

  int vocab_size() const { return vocab_size_; }
  const Map& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  // row += scale * values
  void add(const Context& ctx, std::span<const double> values, double scale = 1.0);
  void merge(const GradAccumulator& other);
  void scale(double factor);
  std::span<const double> row(const Context& ctx) const;

  double norm() const;
  double max_abs() const;
  bool all_zero() const;
  // First non-finite entry, if any.
  const Context* find_non_finite() const;

  friend bool operator==(const GradAccumulator&, const GradAccumulator&) = default;

 private:
  int vocab_size_;
  Map entries_;
  std::vector<double> zeros_;
};

struct RolloutGroup {
  std::uint32_t query_id = 0;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
  bool degenerate = false;
};

struct AdvantageResult {
  std::vector<double> advantages;
  bool degenerate = false;
};

// (R - mean) / std with population statistics. std < 1e-8 gives all zeros.
AdvantageResult group_advantage(std::span<const double> rewards);
// Verifies that every rollout has a reward, then fills advantages/degenerate.
RolloutGroup make_group(std::uint32_t query_id, std::vector<Rollout> rollouts);

struct ClipResult {
  double value = 0.0;
  bool clipped = false;  // the clipped branch was strictly selected by the min
};

// min(r * w, clip(r, 1 - eps, 1 + eps) * w)
ClipResult clipped_weighted(double ratio, double weight, double eps);

// Token and clip counters accumulated while assembling gradients.
struct GradStats {
  std::size_t tokens = 0;
  std::size_t clipped = 0;

  double clip_fraction() const {
    return tokens == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(tokens);
  }
  GradStats& operator+=(const GradStats& o) {
    tokens += o.tokens;
    clipped += o.clipped;
    return *this;
  }
};

// Gradient of the clipped GRPO surrogate, ratio taken at T = 1 against the
// rollouts' base_logprobs_old: per rollout 1/|o|, per group 1/G, mean over groups.
GradAccumulator grpo_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                              double eps, GradStats* stats = nullptr);

// REINFORCE regularizer alpha * mean_i 1/|o_i| sum_t grad min[r R, clip(r) R].
// Rollouts with R = 0 are skipped entirely, so an all-negative batch yields an
// empty (exactly zero) accumulator.
GradAccumulator reinforce_reg_gradient(std::span<const Rollout> reg_rollouts,
                                       const LogitTable& policy_new, double eps, double alpha,
                                       GradStats* stats = nullptr);

GradAccumulator aepo_gradient(std::span<const RolloutGroup> groups, std::span<const Rollout> reg_rollouts,
                              const LogitTable& policy_new, const LossConfig& cfg,
                              GradStats* stats = nullptr);

// lambda * entropy gradient at every visited context, weighted like the GRPO
// surrogate (1/|o|, 1/G, mean over groups). Degenerate groups are included.
GradAccumulator entropy_bonus_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                       double lambda);
GradAccumulator entropy_reg_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                     double lambda, double eps, GradStats* stats = nullptr);

// A + min(beta * H_t, |A| / kappa); H_t is a constant.
double entropy_adv_shaped(double adv, double token_entropy, double beta, double kappa);
GradAccumulator entropy_adv_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                     const LossConfig& cfg, GradStats* stats = nullptr);

// Plain REINFORCE: mean over all rollouts of 1/|o| sum_t grad min[r R, clip(r) R].
GradAccumulator reinforce_gradient(std::span<const RolloutGroup> groups, const LogitTable& policy_new,
                                   double eps, GradStats* stats = nullptr);

// Advantage-weighted regularizer (Table-3 second ablation): the GRPO surrogate
// on temperature-sampled groups, scaled by alpha. Negatives are kept.
GradAccumulator adv_weighted_reg_gradient(std::span<const RolloutGroup> reg_groups,
                                          const LogitTable& policy_new, double eps, double alpha,
                                          GradStats* stats = nullptr);

// Dispatch for the two ablations. ablate_orig_dist is the AEPO gradient (the
// caller sampled reg_rollouts at T = 1); ablate_adv_weighted uses reg_groups.
GradAccumulator ablation_gradient(std::span<const RolloutGroup> groups, std::span<const Rollout> reg_rollouts,
                                  std::span<const RolloutGroup> reg_groups, const LogitTable& policy_new,
                                  const LossConfig& cfg, GradStats* stats = nullptr);

}  // namespace aepo
