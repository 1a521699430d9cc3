#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aepo/algorithms.hpp"
#include "aepo/controller.hpp"
#include "aepo/envs.hpp"
#include "aepo/optimizer.hpp"
#include "aepo/policy.hpp"

namespace aepo {

struct TrainConfig {
  TaskSpec task;
  LossConfig loss;
  ControllerConfig controller;
  int steps = 500;
  int queries_per_batch = 16;
  int group_size = 5;
  int inner_epochs = 1;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  int eval_every = 10;
  int checkpoint_every = 0;

  void validate() const;
};

// Desk-scale defaults: copy task V=4, L=3, 8 queries; 16 queries x G=5 per
// batch; mix_count = round(0.117 * 80) = 9.
TrainConfig default_train_config();

struct StepRecord {
  std::uint64_t step = 0;
  double entropy_estimate = 0.0;  // batch entropy of pi_old from the group batch
  double selected_temperature = 1.0;
  double mean_batch_reward = 0.0;
  double degenerate_group_fraction = 0.0;
  int positives_found = 0;
  int draws_used = 0;
  double clip_fraction = 0.0;
  double grad_norm_grpo = 0.0;
  double grad_norm_reg = 0.0;
  // Exact values for the updated policy, on eval steps only.
  std::optional<double> eval_success;
  std::optional<double> exact_entropy;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;  // steps completed; the next step draws streams keyed by step + 1
  LogitTable policy{2, 1};
  OptimizerState optimizer;
  std::optional<double> last_temperature;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct TrainerState {
  TrainConfig cfg;
  Task task;
  LogitTable policy;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  std::optional<double> last_temperature;
  std::string config_hash;

  explicit TrainerState(TrainConfig config);
  TrainerState(TrainConfig config, const Checkpoint& ckpt);

  Checkpoint checkpoint() const;
};

// One training step: snapshot pi_old, sample the group batch at T = 1,
// estimate entropy, pick the regularizer temperature, collect the
// regularizer batch, assemble the variant's gradient and take an ascent step.
// Throws NumericalError naming the offending context on a non-finite gradient.
StepRecord train_step(TrainerState& state);

struct EvalResult {
  double success = 0.0;
  bool exact = true;
  double ci_half_width = 0.0;  // 95% normal interval, Monte Carlo only
};

// Exact expected reward by enumeration, or Monte Carlo (n draws per query)
// when the response space is too large.
EvalResult evaluate(const LogitTable& policy, const Task& task, int mc_samples_per_query = 2000,
                    std::uint64_t seed = 0);

struct RunOptions {
  // When set: telemetry.jsonl, checkpoints/ and final checkpoint go here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const StepRecord&)> on_step;
  // Stop after this many completed steps (simulates an interruption).
  std::optional<std::uint64_t> stop_after;
};

struct RunResult {
  std::vector<StepRecord> telemetry;
  Checkpoint final_checkpoint;
};

RunResult run(const TrainConfig& cfg, const RunOptions& opts = {});
// Continues from ckpt until cfg.steps; telemetry covers steps ckpt.step+1..steps.
RunResult resume(const TrainConfig& cfg, const Checkpoint& ckpt, const RunOptions& opts = {});

// Fraction of leading steps excluded from stabilization statistics.
inline constexpr double kWarmupFraction = 0.2;

struct RunSummary {
  double final_entropy = 0.0;
  double final_eval_success = 0.0;
  double mean_abs_entropy_error = 0.0;  // mean |H - target| after warmup
  double mean_post_warmup_entropy = 0.0;
};

RunSummary summarize(const TrainConfig& cfg, const RunResult& result, const Task& task);

}  // namespace aepo
