#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "aepo/envs.hpp"
#include "aepo/policy.hpp"
#include "aepo/rng.hpp"

namespace aepo::test {

inline std::vector<double> random_logits(RngStream& rng, int v, double scale) {
  std::vector<double> l(static_cast<std::size_t>(v));
  for (auto& x : l) x = scale * (2.0 * rng.uniform() - 1.0);
  return l;
}

inline TaskSpec copy_spec(int v, int len, int queries, std::uint64_t seed = 0) {
  TaskSpec s;
  s.kind = TaskKind::kCopy;
  s.vocab = Vocab{v, std::nullopt};
  s.response_len = len;
  s.num_queries = queries;
  s.seed = seed;
  return s;
}

inline TaskSpec multi_spec(int v, int len, int k, int queries, std::uint64_t seed = 0) {
  TaskSpec s = copy_spec(v, len, queries, seed);
  s.kind = TaskKind::kMultiSolution;
  s.solutions_per_query = k;
  return s;
}

// Random logits on every context a length-`len` response can visit.
inline LogitTable random_policy(const Task& task, double scale, std::uint64_t seed) {
  const int v = task.vocab().size;
  LogitTable p(v, task.response_len());
  RngStream rng(seed, StreamPurpose::kTest, 99);
  for (const Query& q : task.queries()) {
    std::vector<std::vector<Token>> frontier{{}};
    for (int depth = 0; depth < task.response_len(); ++depth) {
      std::vector<std::vector<Token>> next;
      for (const auto& prefix : frontier) {
        p.set_logits(Context{q.id, prefix}, random_logits(rng, v, scale));
        for (int t = 0; t < v; ++t) {
          auto child = prefix;
          child.push_back(static_cast<Token>(t));
          next.push_back(std::move(child));
        }
      }
      frontier = std::move(next);
    }
  }
  return p;
}

// Puts a large logit gap on every step of `seq` for query `q`.
inline void make_deterministic(LogitTable& p, std::uint32_t q, const std::vector<Token>& seq, double gap = 60.0) {
  std::vector<Token> prefix;
  for (Token t : seq) {
    std::vector<double> row(static_cast<std::size_t>(p.vocab_size()), 0.0);
    row[t] = gap;
    p.set_logits(Context{q, prefix}, row);
    prefix.push_back(t);
  }
}

inline Rollout sampled(const LogitTable& p, const Task& task, std::uint32_t q, double temp, std::uint64_t key) {
  RngStream rng(5, StreamPurpose::kTest, key);
  Rollout r = sample_response(p, task.vocab(), q, Temperature(temp), task.response_len(), rng);
  r.reward = task.verify(q, r.tokens);
  return r;
}

// A rollout with chosen tokens and reward, logged against policy `p` at T = 1.
inline Rollout manual_rollout(const LogitTable& p, std::uint32_t q, const std::vector<Token>& tokens, int reward) {
  Rollout r;
  r.query_id = q;
  Context ctx{q, {}};
  for (Token a : tokens) {
    const auto l = p.logits(ctx);
    const double lp = log_probs(l, Temperature(1.0))[a];
    r.tokens.push_back(a);
    r.behavior_logprobs.push_back(lp);
    r.base_logprobs_old.push_back(lp);
    r.token_entropies.push_back(token_entropy(probs(l, Temperature(1.0))));
    ctx.prefix.push_back(a);
  }
  r.reward = reward;
  return r;
}

}  // namespace aepo::test
