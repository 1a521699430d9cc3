#include "aepo/verify_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aepo/algorithms.hpp"
#include "aepo/envs.hpp"
#include "aepo/oracles.hpp"
#include "aepo/rng.hpp"
#include "aepo/stats.hpp"

namespace aepo {

nlohmann::ordered_json to_json(const CheckResult& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["status"] = r.passed ? "pass" : "fail";
  j["measured"] = r.measured;
  j["tolerance"] = r.tolerance;
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

namespace {

std::vector<double> random_logits(RngStream& rng, std::size_t n, double scale) {
  std::vector<double> l(n);
  for (double& x : l) x = scale * (2.0 * rng.uniform() - 1.0);
  return l;
}

// Random logits on every context a response of length < L can reach.
LogitTable random_policy(const Task& task, RngStream& rng, double scale) {
  LogitTable policy(task.vocab().size, task.response_len());
  const auto v = static_cast<std::size_t>(task.vocab().size);
  for (const Query& q : task.queries()) {
    std::vector<std::vector<Token>> frontier{{}};
    for (int depth = 0; depth < task.response_len(); ++depth) {
      std::vector<std::vector<Token>> next;
      for (const auto& prefix : frontier) {
        policy.set_logits(Context{q.id, prefix}, random_logits(rng, v, scale));
        for (std::size_t a = 0; a < v; ++a) {
          auto child = prefix;
          child.push_back(static_cast<Token>(a));
          next.push_back(std::move(child));
        }
      }
      frontier = std::move(next);
    }
  }
  return policy;
}

TaskSpec small_copy_task() {
  TaskSpec spec;
  spec.kind = TaskKind::kCopy;
  spec.vocab = Vocab{3, std::nullopt};
  spec.response_len = 2;
  spec.num_queries = 2;
  spec.seed = 11;
  return spec;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

// Mean of a per-batch sampled gradient against an exact expectation, one
// coordinate at a time. Returns the largest |mean - exact| / standard error.
CheckResult compare_to_expectation(const std::string& name, const LogitTable& policy, const GradAccumulator& exact,
                                   int batches, const std::function<GradAccumulator(int)>& sample) {
  std::vector<Context> coords;
  for (const auto& [ctx, row] : policy.entries()) coords.push_back(ctx);
  const auto v = static_cast<std::size_t>(policy.vocab_size());
  std::vector<double> sum(coords.size() * v, 0.0), sum_sq(coords.size() * v, 0.0);
  for (int b = 0; b < batches; ++b) {
    const GradAccumulator g = sample(b);
    for (std::size_t c = 0; c < coords.size(); ++c) {
      const auto row = g.row(coords[c]);
      for (std::size_t a = 0; a < v; ++a) {
        sum[c * v + a] += row[a];
        sum_sq[c * v + a] += row[a] * row[a];
      }
    }
  }
  const double n = batches;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const auto ex = exact.row(coords[c]);
    for (std::size_t a = 0; a < v; ++a) {
      const double mean = sum[c * v + a] / n;
      const double var = std::max(0.0, (sum_sq[c * v + a] / n - mean * mean) * n / (n - 1.0));
      const double se = std::sqrt(var / n);
      const double diff = std::abs(mean - ex[a]);
      if (se < 1e-15) {
        // A coordinate the estimator never moves must match exactly.
        if (diff > 1e-12) worst = std::numeric_limits<double>::infinity();
        continue;
      }
      worst = std::max(worst, diff / se);
      ++checked;
    }
  }
  return CheckResult{name, worst <= 3.0, worst, 3.0,
                     std::to_string(batches) + " batches, " + std::to_string(checked) + " coordinates"};
}

std::vector<RolloutGroup> sample_groups(const LogitTable& policy, const Task& task, std::uint64_t seed,
                                        std::uint64_t batch, int num_groups, int group_size) {
  std::vector<RolloutGroup> groups;
  for (int g = 0; g < num_groups; ++g) {
    RngStream qrng(seed, StreamPurpose::kGroupQuery, batch, static_cast<std::uint64_t>(g));
    const Query q = task.sample_query(qrng);
    std::vector<Rollout> rollouts;
    for (int i = 0; i < group_size; ++i) {
      RngStream rng(seed, StreamPurpose::kGroupRollout, batch, static_cast<std::uint64_t>(g),
                    static_cast<std::uint64_t>(i));
      Rollout r = sample_response(policy, task.vocab(), q.id, Temperature(1.0), task.response_len(), rng);
      r.reward = task.verify(q, r.tokens);
      rollouts.push_back(std::move(r));
    }
    groups.push_back(make_group(q.id, std::move(rollouts)));
  }
  return groups;
}

}  // namespace

CheckResult check_grad_log_pi(const VerifyOptions& opts, int cases) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 1);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const auto v = static_cast<std::size_t>(2 + rng.below(7));
    const auto logits = random_logits(rng, v, 3.0);
    const Temperature t(0.5 + 1.5 * rng.uniform());
    const auto a = static_cast<Token>(rng.below(v));
    const auto analytic = opts.grad_log_pi(logits, t, a);
    const auto fd = fd_vector([&](std::span<const double> x) { return log_probs(x, t)[a]; }, logits);
    worst = std::max(worst, relative_error(analytic, fd));
  }
  return CheckResult{"grad_log_pi_fd", worst <= 1e-6, worst, 1e-6, std::to_string(cases) + " cases"};
}

CheckResult check_entropy_grad(const VerifyOptions& opts, int cases) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 2);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const auto v = static_cast<std::size_t>(2 + rng.below(7));
    const auto logits = random_logits(rng, v, 3.0);
    const auto analytic = entropy_grad(logits);
    const auto fd =
        fd_vector([](std::span<const double> x) { return token_entropy(probs(x, Temperature(1.0))); }, logits);
    worst = std::max(worst, relative_error(analytic, fd));
  }
  return CheckResult{"entropy_grad_fd", worst <= 1e-6, worst, 1e-6, std::to_string(cases) + " cases"};
}

CheckResult check_exact_gradient(const VerifyOptions& opts) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 3);
  const Task task(small_copy_task());
  const LogitTable policy = random_policy(task, rng, 1.5);
  const auto analytic = exact_gradient(policy, task);
  const auto fd = fd_gradient([&](const LogitTable& p) { return exact_objective(p, task); }, policy, {});
  const double err = relative_error(analytic, fd);
  return CheckResult{"exact_gradient_fd", err <= 1e-6, err, 1e-6, "copy V=3 L=2"};
}

CheckResult check_reinforce_unbiased(const VerifyOptions& opts, int batches) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 4);
  const Task task(small_copy_task());
  const LogitTable policy = random_policy(task, rng, 1.0);
  const auto exact = exact_gradient(policy, task, /*length_normalized=*/true);
  return compare_to_expectation("reinforce_unbiased", policy, exact, batches, [&](int b) {
    const auto groups = sample_groups(policy, task, opts.seed + 1, static_cast<std::uint64_t>(b), 4, 5);
    return reinforce_gradient(groups, policy, 0.2);
  });
}

CheckResult check_grpo_unbiased(const VerifyOptions& opts, int batches) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 5);
  const Task task(small_copy_task());
  const LogitTable policy = random_policy(task, rng, 1.0);
  const auto exact = exact_grpo_gradient(policy, task, 5);
  return compare_to_expectation("grpo_unbiased", policy, exact, batches, [&](int b) {
    const auto groups = sample_groups(policy, task, opts.seed + 2, static_cast<std::uint64_t>(b), 4, 5);
    return grpo_gradient(groups, policy, 0.2);
  });
}

CheckResult check_advantage_contract(const VerifyOptions& opts, int groups) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 6);
  double worst = 0.0;
  int degenerate = 0;
  bool degenerate_ok = true;
  std::vector<double> rewards;
  for (int i = 0; i < groups; ++i) {
    const auto g = static_cast<std::size_t>(2 + rng.below(15));
    const double p = rng.uniform();
    rewards.assign(g, 0.0);
    for (double& r : rewards) r = rng.uniform() < p ? 1.0 : 0.0;
    const auto res = group_advantage(rewards);
    if (res.degenerate) {
      ++degenerate;
      degenerate_ok = degenerate_ok && std::all_of(res.advantages.begin(), res.advantages.end(),
                                                   [](double a) { return a == 0.0; });
      continue;
    }
    double mean = 0.0;
    for (double a : res.advantages) mean += a;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double a : res.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(g));
    // Each deviation in units of its own bound: |mean| < 1e-12, |std - 1| < 1e-9.
    worst = std::max({worst, std::abs(mean) / 1e-12, std::abs(sd - 1.0) / 1e-9});
  }
  const bool ok = degenerate_ok && worst < 1.0;
  return CheckResult{"advantage_contract", ok, worst, 1.0,
                     std::to_string(groups) + " groups, " + std::to_string(degenerate) + " degenerate" +
                         (degenerate_ok ? "" : ", nonzero advantage in a degenerate group")};
}

CheckResult check_lemma_scaling(const VerifyOptions& opts, int probes) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 7);
  const std::vector<double> etas{0.2, 0.1, 0.05, 0.025};
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int i = 0; i < probes; ++i) {
    LemmaProbe probe;
    probe.logits = random_logits(rng, 8, 1.0);
    probe.advantage = random_logits(rng, 8, 1.0);
    const auto errs = lemma_error_scaling(probe, etas);
    for (std::size_t k = 0; k + 1 < errs.size(); ++k) {
      const double ratio = errs[k] / errs[k + 1];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  const bool ok = lo >= 2.5 && hi <= 6.0;
  // measured: distance of the worst ratio outside [2.5, 6], 0 when inside.
  const double outside = std::max({0.0, 2.5 - lo, hi - 6.0});
  return CheckResult{"lemma_scaling", ok, outside, 0.0,
                     "halving ratios in [" + fmt(lo) + ", " + fmt(hi) + "] over " + std::to_string(probes) +
                         " probes"};
}

CheckResult check_temperature_monotone(const VerifyOptions& opts, int vectors) {
  RngStream rng(opts.seed, StreamPurpose::kTest, 8);
  const std::vector<double> temps{0.5, 0.8, 1.0, 1.2, 2.0};
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < vectors;) {
    const auto v = static_cast<std::size_t>(2 + rng.below(15));
    const auto logits = random_logits(rng, v, 3.0);
    const auto [mn, mx] = std::minmax_element(logits.begin(), logits.end());
    if (*mx - *mn < 1e-3) continue;  // too close to uniform
    ++i;
    double prev = -1.0;
    for (double t : temps) {
      const double h = token_entropy(probs(logits, Temperature(t)));
      if (prev >= 0.0) min_gap = std::min(min_gap, h - prev);
      prev = h;
    }
  }
  return CheckResult{"temperature_monotone", min_gap > 0.0, min_gap, 0.0,
                     std::to_string(vectors) + " vectors, smallest entropy step"};
}

CheckResult check_negative_filter(const VerifyOptions& opts) {
  TaskSpec spec = small_copy_task();
  const Task task(spec);
  LogitTable policy(spec.vocab.size, spec.response_len);
  std::vector<Rollout> negatives;
  for (std::uint64_t i = 0; negatives.size() < 32; ++i) {
    RngStream rng(opts.seed, StreamPurpose::kTest, 9, i);
    const Query& q = task.queries()[i % task.queries().size()];
    Rollout r = sample_response(policy, spec.vocab, q.id, Temperature(1.2), spec.response_len, rng);
    r.reward = task.verify(q, r.tokens);
    if (*r.reward == 0) negatives.push_back(std::move(r));
  }
  const auto g = reinforce_reg_gradient(negatives, policy, 0.2, 1.0);
  const double m = g.max_abs();
  return CheckResult{"negative_filter", g.empty() && m == 0.0, m, 0.0, "32 negative rollouts"};
}

TrainConfig positive_trend_config(std::uint64_t seed) {
  TrainConfig cfg = default_train_config();
  cfg.task.kind = TaskKind::kMultiSolution;
  cfg.task.solutions_per_query = 40;
  cfg.optimizer.learning_rate = 0.05;
  cfg.controller.mix_count = 40;
  cfg.seed = seed;
  return cfg;
}

std::vector<double> positive_only_entropy_trace(const TrainConfig& base, double temperature, int warm_steps,
                                                int steps) {
  TrainConfig warm = base;
  warm.loss.variant = Variant::kGrpo;
  warm.eval_every = 0;
  TrainerState warm_state(warm);
  for (int i = 0; i < warm_steps; ++i) train_step(warm_state);

  TrainConfig pos = base;
  pos.loss.variant = Variant::kAepo;
  pos.loss.policy_term = false;
  pos.controller.fixed_temperature = temperature;
  pos.eval_every = 1;
  pos.steps = steps;
  TrainerState state(pos);
  state.policy = warm_state.policy;

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) trace.push_back(*train_step(state).exact_entropy);
  return trace;
}

CheckResult check_positive_trend(const VerifyOptions& opts, double temperature) {
  const auto trace = positive_only_entropy_trace(positive_trend_config(opts.seed), temperature, 300, 200);
  const double rho = stats::spearman_trend(trace);
  const bool rising = temperature > 1.0;
  const bool ok = rising ? rho > 0.8 : rho < -0.8;
  return CheckResult{std::string("positive_trend_t") + (rising ? "_high" : "_low"), ok, rho,
                     rising ? 0.8 : -0.8, "T=" + fmt(temperature) + ", spearman rho over 200 steps"};
}

std::vector<CheckResult> run_verify_suite(const VerifyOptions& opts) {
  const int unbiased_batches = opts.full ? 10000 : 2000;
  const int advantage_groups = opts.full ? 100000 : 20000;
  std::vector<CheckResult> out;
  out.push_back(check_grad_log_pi(opts));
  out.push_back(check_entropy_grad(opts));
  out.push_back(check_exact_gradient(opts));
  out.push_back(check_reinforce_unbiased(opts, unbiased_batches));
  out.push_back(check_grpo_unbiased(opts, unbiased_batches));
  out.push_back(check_advantage_contract(opts, advantage_groups));
  out.push_back(check_lemma_scaling(opts));
  out.push_back(check_temperature_monotone(opts));
  out.push_back(check_negative_filter(opts));
  out.push_back(check_positive_trend(opts, 1.2));
  out.push_back(check_positive_trend(opts, 0.8));
  return out;
}

}  // namespace aepo
