#pragma once

#include <functional>
#include <span>
#include <vector>

#include "aepo/algorithms.hpp"
#include "aepo/envs.hpp"
#include "aepo/policy.hpp"

namespace aepo {

// Exact expectations by walking every response of every query (queries
// weighted 1/|Q|). All of these throw CapacityError when V^L exceeds the
// enumeration limit.

// sum_q 1/|Q| sum_o pi(o|q) R(q, o)
double exact_objective(const LogitTable& policy, const Task& task);

// sum_q 1/|Q| sum_o pi(o|q) (1/|o|) sum_t H_t
double exact_entropy(const LogitTable& policy, const Task& task);

// sum_q 1/|Q| sum_o pi(o|q) R(q, o) sum_t grad log pi(o_t | c_t).
// With length_normalized the inner sum is divided by |o|.
GradAccumulator exact_gradient(const LogitTable& policy, const Task& task, bool length_normalized = false);

// Expected GRPO gradient at r = 1 for groups of size G. Conditioning on one
// rollout, the number of successes among the other G - 1 is binomial, which
// gives each reward value an exact expected normalized advantage.
GradAccumulator exact_grpo_gradient(const LogitTable& policy, const Task& task, int group_size);

// E_m[A(reward, m)] with m ~ Binomial(G - 1, p).
double expected_group_advantage(int reward, double success_prob, int group_size);

struct FDConfig {
  double delta = 1e-5;

  void validate() const;
};

// Central differences of f with respect to every logit of the listed
// contexts. An empty list means every context stored in `at`.
GradAccumulator fd_gradient(const std::function<double(const LogitTable&)>& f, const LogitTable& at,
                            std::span<const Context> contexts, const FDConfig& cfg = {});

// Central differences of a function of one logit vector.
std::vector<double> fd_vector(const std::function<double(std::span<const double>)>& f,
                              std::span<const double> at, const FDConfig& cfg = {});

// ||a - b|| / max(||a||, ||b||), or 0 when both norms and the difference are
// below abs_floor.
double relative_error(std::span<const double> a, std::span<const double> b, double abs_floor = 1e-10);
double relative_error(const GradAccumulator& a, const GradAccumulator& b, double abs_floor = 1e-10);

// Single-state softmax bandit used to probe the entropy-change approximation
// under a natural policy gradient step.
struct LemmaProbe {
  std::vector<double> logits;
  std::vector<double> advantage;
  double eta = 0.1;

  void validate() const;
};

// Tabular softmax NPG: logits_a += eta * A(a).
std::vector<double> npg_step(const LemmaProbe& probe);

// -eta * Cov_{a ~ pi}[log pi(a), A(a)]
double predicted_entropy_delta(const LemmaProbe& probe);

// Exact entropy change of one NPG step.
double actual_entropy_delta(const LemmaProbe& probe);

// |actual - predicted| for each step size in etas.
std::vector<double> lemma_error_scaling(const LemmaProbe& probe, std::span<const double> etas);

}  // namespace aepo
