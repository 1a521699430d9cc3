#include "aepo/trainer.hpp"

#include <cmath>
#include <sstream>

#include "aepo/config.hpp"
#include "aepo/error.hpp"
#include "aepo/io.hpp"
#include "aepo/oracles.hpp"
#include "aepo/stats.hpp"

namespace aepo {

void TrainConfig::validate() const {
  task.validate();
  loss.validate();
  controller.validate(task.vocab.size);
  optimizer.validate();
  if (steps < 0) throw InvalidInput("steps must be >= 0");
  if (queries_per_batch < 1) throw InvalidInput("queries_per_batch must be >= 1");
  if (group_size < 2) throw InvalidInput("group size G must be >= 2");
  if (inner_epochs < 1) throw InvalidInput("inner_epochs must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0) throw InvalidInput("cadences must be >= 0");
}

TrainConfig default_train_config() {
  TrainConfig c;
  c.task.kind = TaskKind::kCopy;
  c.task.vocab = Vocab{4, std::nullopt};
  c.task.response_len = 3;
  c.task.num_queries = 8;
  c.task.seed = 0;
  c.loss = LossConfig{};
  c.controller.target_entropy = 0.5 * std::log(4.0);
  c.controller.mix_count = 9;
  c.controller.sample_budget = 400;
  return c;
}

TrainerState::TrainerState(TrainConfig config)
    : cfg(std::move(config)),
      task(cfg.task),
      policy(cfg.task.vocab.size, cfg.task.response_len),
      config_hash(aepo::config_hash(cfg)) {
  cfg.validate();
}

TrainerState::TrainerState(TrainConfig config, const Checkpoint& ckpt) : TrainerState(std::move(config)) {
  if (ckpt.policy.vocab_size() != policy.vocab_size() || ckpt.policy.max_len() != policy.max_len()) {
    throw ContractError("checkpoint policy shape does not match the config");
  }
  if (ckpt.seed != cfg.seed) throw ContractError("checkpoint seed does not match the config");
  policy = ckpt.policy;
  optimizer = ckpt.optimizer;
  step = ckpt.step;
  last_temperature = ckpt.last_temperature;
}

Checkpoint TrainerState::checkpoint() const {
  Checkpoint c;
  c.config_hash = config_hash;
  c.seed = cfg.seed;
  c.step = step;
  c.policy = policy;
  c.optimizer = optimizer;
  c.last_temperature = last_temperature;
  return c;
}

namespace {

std::string describe_row(const Context& ctx, std::span<const double> grad, std::span<const double> logits) {
  std::ostringstream os;
  os << "query " << ctx.query_id << ", prefix [";
  for (std::size_t i = 0; i < ctx.prefix.size(); ++i) os << (i ? "," : "") << ctx.prefix[i];
  os << "], gradient [";
  for (std::size_t i = 0; i < grad.size(); ++i) os << (i ? "," : "") << grad[i];
  os << "], logits [";
  for (std::size_t i = 0; i < logits.size(); ++i) os << (i ? "," : "") << logits[i];
  os << "]";
  return os.str();
}

// The regularizer is inert when its coefficient is zero; skipping it keeps
// such runs identical to the plain group-relative baseline.
bool regularizer_active(const TrainConfig& cfg) {
  return uses_regularizer(cfg.loss.variant) && cfg.loss.alpha != 0.0;
}

}  // namespace

StepRecord train_step(TrainerState& s) {
  const TrainConfig& cfg = s.cfg;
  const std::uint64_t step = s.step + 1;
  const LogitTable policy_old = s.policy;
  const Temperature base(1.0);
  const int len = s.task.response_len();

  std::vector<RolloutGroup> groups;
  groups.reserve(static_cast<std::size_t>(cfg.queries_per_batch));
  double reward_sum = 0.0;
  int degenerate = 0;
  for (int qi = 0; qi < cfg.queries_per_batch; ++qi) {
    RngStream qrng(cfg.seed, StreamPurpose::kGroupQuery, step, static_cast<std::uint64_t>(qi));
    const Query q = s.task.sample_query(qrng);
    std::vector<Rollout> rollouts;
    rollouts.reserve(static_cast<std::size_t>(cfg.group_size));
    for (int gi = 0; gi < cfg.group_size; ++gi) {
      RngStream rng(cfg.seed, StreamPurpose::kGroupRollout, step, static_cast<std::uint64_t>(qi),
                    static_cast<std::uint64_t>(gi));
      Rollout r = sample_response(policy_old, s.task.vocab(), q.id, base, len, rng);
      r.reward = s.task.verify(q, r.tokens);
      reward_sum += *r.reward;
      rollouts.push_back(std::move(r));
    }
    groups.push_back(make_group(q.id, std::move(rollouts)));
    if (groups.back().degenerate) ++degenerate;
  }

  StepRecord rec;
  rec.step = step;
  rec.mean_batch_reward = reward_sum / static_cast<double>(cfg.queries_per_batch * cfg.group_size);
  rec.degenerate_group_fraction = static_cast<double>(degenerate) / static_cast<double>(cfg.queries_per_batch);
  const EntropyEstimate est = batch_entropy(groups);
  rec.entropy_estimate = est.value;

  std::vector<Rollout> reg_rollouts;
  std::vector<RolloutGroup> reg_groups;
  if (regularizer_active(cfg)) {
    double temp = 1.0;
    if (cfg.controller.fixed_temperature) {
      temp = *cfg.controller.fixed_temperature;
    } else if (cfg.loss.variant != Variant::kAblateOrigDist) {
      std::optional<Temperature> prev;
      if (s.last_temperature) prev = Temperature(*s.last_temperature);
      temp = select_temperature(est, cfg.controller, prev).value();
      s.last_temperature = temp;
    }
    rec.selected_temperature = temp;
    if (cfg.loss.variant == Variant::kAblateAdvWeighted) {
      const int n_groups = (cfg.controller.mix_count + cfg.group_size - 1) / cfg.group_size;
      reg_groups = collect_reg_groups(policy_old, Temperature(temp), s.task, n_groups, cfg.group_size, cfg.seed,
                                      step);
      rec.draws_used = n_groups * cfg.group_size;
      for (const auto& g : reg_groups) {
        for (const auto& r : g.rollouts) rec.positives_found += *r.reward;
      }
    } else {
      PositiveBatch pos = collect_positive_samples(policy_old, Temperature(temp), s.task, cfg.controller.mix_count,
                                                   cfg.controller.sample_budget, cfg.seed, step);
      rec.positives_found = static_cast<int>(pos.rollouts.size());
      rec.draws_used = pos.draws;
      reg_rollouts = std::move(pos.rollouts);
    }
  }

  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    GradStats stats;
    GradAccumulator main_part(s.policy.vocab_size());
    GradAccumulator reg_part(s.policy.vocab_size());
    if (cfg.loss.policy_term) {
      switch (cfg.loss.variant) {
        case Variant::kReinforce:
          main_part = reinforce_gradient(groups, s.policy, cfg.loss.epsilon, &stats);
          break;
        case Variant::kEntropyAdv:
          main_part = entropy_adv_gradient(groups, s.policy, cfg.loss, &stats);
          break;
        default:
          main_part = grpo_gradient(groups, s.policy, cfg.loss.epsilon, &stats);
          break;
      }
    }
    switch (cfg.loss.variant) {
      case Variant::kEntropyReg:
        reg_part = entropy_bonus_gradient(groups, s.policy, cfg.loss.lambda);
        break;
      case Variant::kAepo:
      case Variant::kAblateOrigDist:
        reg_part = reinforce_reg_gradient(reg_rollouts, s.policy, cfg.loss.epsilon, cfg.loss.alpha, &stats);
        break;
      case Variant::kAblateAdvWeighted:
        reg_part = adv_weighted_reg_gradient(reg_groups, s.policy, cfg.loss.epsilon, cfg.loss.alpha, &stats);
        break;
      default:
        break;
    }
    if (epoch == 0) {
      rec.grad_norm_grpo = main_part.norm();
      rec.grad_norm_reg = reg_part.norm();
      rec.clip_fraction = stats.clip_fraction();
    }
    GradAccumulator total = std::move(main_part);
    total.merge(reg_part);
    if (const Context* bad = total.find_non_finite()) {
      throw NumericalError("non-finite gradient at step " + std::to_string(step) + ": " +
                           describe_row(*bad, total.row(*bad), s.policy.logits(*bad)));
    }
    apply_ascent(s.policy, s.optimizer, total, cfg.optimizer);
  }

  if (cfg.eval_every > 0 && step % static_cast<std::uint64_t>(cfg.eval_every) == 0) {
    const EvalResult ev = evaluate(s.policy, s.task, 2000, cfg.seed ^ step);
    rec.eval_success = ev.success;
    if (s.task.enumerable()) rec.exact_entropy = exact_entropy(s.policy, s.task);
  }
  s.step = step;
  return rec;
}

EvalResult evaluate(const LogitTable& policy, const Task& task, int mc_samples_per_query, std::uint64_t seed) {
  if (task.enumerable()) return EvalResult{exact_objective(policy, task), true, 0.0};
  double hits = 0.0;
  double n = 0.0;
  for (const Query& q : task.queries()) {
    for (int i = 0; i < mc_samples_per_query; ++i) {
      RngStream rng(seed, StreamPurpose::kEvalMonteCarlo, q.id, static_cast<std::uint64_t>(i));
      Rollout r = sample_response(policy, task.vocab(), q.id, Temperature(1.0), task.response_len(), rng);
      hits += task.verify(q, r.tokens);
      n += 1.0;
    }
  }
  const double p = hits / n;
  return EvalResult{p, false, 1.96 * std::sqrt(p * (1.0 - p) / n)};
}

namespace {

RunResult drive(TrainerState& state, const RunOptions& opts) {
  RunResult result;
  std::optional<TelemetryWriter> writer;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    writer.emplace(*opts.out_dir / "telemetry.jsonl", state.config_hash);
    if (state.cfg.checkpoint_every > 0) std::filesystem::create_directories(*opts.out_dir / "checkpoints");
  }
  const auto total = static_cast<std::uint64_t>(state.cfg.steps);
  while (state.step < total) {
    if (opts.stop_after && state.step >= *opts.stop_after) break;
    StepRecord rec = train_step(state);
    if (writer) writer->write(rec);
    if (opts.on_step) opts.on_step(rec);
    result.telemetry.push_back(std::move(rec));
    if (opts.out_dir && state.cfg.checkpoint_every > 0 &&
        state.step % static_cast<std::uint64_t>(state.cfg.checkpoint_every) == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%06llu.json", static_cast<unsigned long long>(state.step));
      save_checkpoint(state.checkpoint(), *opts.out_dir / "checkpoints" / name);
    }
  }
  result.final_checkpoint = state.checkpoint();
  if (opts.out_dir) save_checkpoint(result.final_checkpoint, *opts.out_dir / "final_checkpoint.json");
  return result;
}

}  // namespace

RunResult run(const TrainConfig& cfg, const RunOptions& opts) {
  TrainerState state(cfg);
  // A fresh run starts a fresh telemetry file; only resume appends.
  if (opts.out_dir) std::filesystem::remove(*opts.out_dir / "telemetry.jsonl");
  return drive(state, opts);
}

RunResult resume(const TrainConfig& cfg, const Checkpoint& ckpt, const RunOptions& opts) {
  TrainerState state(cfg, ckpt);
  if (ckpt.config_hash != state.config_hash) {
    throw ContractError("checkpoint was written under config " + ckpt.config_hash + ", not " + state.config_hash);
  }
  return drive(state, opts);
}

RunSummary summarize(const TrainConfig& cfg, const RunResult& result, const Task& task) {
  RunSummary s;
  const LogitTable& policy = result.final_checkpoint.policy;
  s.final_eval_success = evaluate(policy, task, 2000, cfg.seed).success;
  if (task.enumerable()) {
    s.final_entropy = exact_entropy(policy, task);
  } else if (!result.telemetry.empty()) {
    s.final_entropy = result.telemetry.back().entropy_estimate;
  }
  const std::size_t n = result.telemetry.size();
  const auto warmup = static_cast<std::size_t>(std::ceil(kWarmupFraction * static_cast<double>(n)));
  std::vector<double> post;
  double abs_err = 0.0;
  for (std::size_t i = warmup; i < n; ++i) {
    post.push_back(result.telemetry[i].entropy_estimate);
    abs_err += std::abs(result.telemetry[i].entropy_estimate - cfg.controller.target_entropy);
  }
  if (!post.empty()) {
    s.mean_abs_entropy_error = abs_err / static_cast<double>(post.size());
    s.mean_post_warmup_entropy = stats::mean(post);
  }
  return s;
}

}  // namespace aepo
