#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "aepo/policy.hpp"
#include "aepo/trainer.hpp"

namespace aepo {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

nlohmann::ordered_json to_json(const CheckResult& r);

using GradLogPiFn = std::function<std::vector<double>(std::span<const double>, Temperature, Token)>;

struct VerifyOptions {
  // Full-size sample counts; the quick setting keeps `aepo verify` under a
  // few seconds.
  bool full = false;
  std::uint64_t seed = 7;
  // Score function under test. Swapping in a broken one is how the suite's
  // own sensitivity is checked.
  GradLogPiFn grad_log_pi = [](std::span<const double> l, Temperature t, Token a) {
    return aepo::grad_log_pi(l, t, a);
  };
};

// Each check is self-contained and deterministic for a given seed.
CheckResult check_grad_log_pi(const VerifyOptions& opts, int cases = 100);
CheckResult check_entropy_grad(const VerifyOptions& opts, int cases = 100);
CheckResult check_exact_gradient(const VerifyOptions& opts);
CheckResult check_reinforce_unbiased(const VerifyOptions& opts, int batches);
CheckResult check_grpo_unbiased(const VerifyOptions& opts, int batches);
CheckResult check_advantage_contract(const VerifyOptions& opts, int groups);
CheckResult check_lemma_scaling(const VerifyOptions& opts, int probes = 20);
CheckResult check_temperature_monotone(const VerifyOptions& opts, int vectors = 1000);
CheckResult check_negative_filter(const VerifyOptions& opts);
CheckResult check_positive_trend(const VerifyOptions& opts, double temperature);

std::vector<CheckResult> run_verify_suite(const VerifyOptions& opts = {});

// Setup for positive-only training: a multi-solution task warmed up with GRPO
// so the policy has room to move in both directions.
TrainConfig positive_trend_config(std::uint64_t seed);

// Exact entropy after each of `steps` regularizer-only steps at a fixed
// temperature, starting from `warm_steps` GRPO steps of `base`.
std::vector<double> positive_only_entropy_trace(const TrainConfig& base, double temperature, int warm_steps,
                                                int steps);

}  // namespace aepo
