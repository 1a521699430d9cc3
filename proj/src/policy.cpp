#include "aepo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aepo/error.hpp"

namespace aepo {

void Vocab::validate() const {
  if (size < 2) throw InvalidInput("vocab size must be >= 2, got " + std::to_string(size));
  if (size > 65535) throw InvalidInput("vocab size too large");
  if (eos && *eos >= size) throw InvalidInput("eos token out of range");
}

Temperature::Temperature(double value) : value_(value) {
  if (!std::isfinite(value) || value <= 0.0) {
    throw InvalidInput("temperature must be finite and > 0, got " + std::to_string(value));
  }
}

LogitTable::LogitTable(int vocab_size, int max_len)
    : vocab_size_(vocab_size), max_len_(max_len), zeros_(static_cast<std::size_t>(vocab_size), 0.0) {
  if (vocab_size < 2) throw InvalidInput("LogitTable: vocab size must be >= 2");
  if (max_len < 1) throw InvalidInput("LogitTable: max_len must be >= 1");
}

std::span<const double> LogitTable::logits(const Context& ctx) const {
  if (ctx.prefix.size() > static_cast<std::size_t>(max_len_)) {
    throw InvalidInput("context prefix longer than max_len");
  }
  auto it = table_.find(ctx);
  if (it == table_.end()) return zeros_;
  return it->second;
}

std::span<double> LogitTable::mutable_logits(const Context& ctx) {
  if (ctx.prefix.size() > static_cast<std::size_t>(max_len_)) {
    throw InvalidInput("context prefix longer than max_len");
  }
  auto [it, inserted] = table_.try_emplace(ctx, zeros_);
  return it->second;
}

void LogitTable::set_logits(const Context& ctx, std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(vocab_size_)) {
    throw InvalidInput("logit vector has wrong length");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite logit");
  }
  auto row = mutable_logits(ctx);
  std::copy(values.begin(), values.end(), row.begin());
}

namespace {

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("empty logit vector");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite logit");
  }
}

}  // namespace

std::vector<double> probs(std::span<const double> logits, Temperature t) {
  check_logits(logits);
  const double inv_t = 1.0 / t.value();
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) * inv_t);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

std::vector<double> log_probs(std::span<const double> logits, Temperature t) {
  check_logits(logits);
  const double inv_t = 1.0 / t.value();
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp((l - mx) * inv_t);
  const double log_z = std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - mx) * inv_t - log_z;
  return out;
}

double token_entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

std::vector<double> grad_log_pi(std::span<const double> logits, Temperature t, Token token) {
  if (token >= logits.size()) throw InvalidInput("token out of range");
  std::vector<double> g = probs(logits, t);
  const double inv_t = 1.0 / t.value();
  for (double& v : g) v = -v * inv_t;
  g[token] += inv_t;
  return g;
}

std::vector<double> entropy_grad(std::span<const double> logits) {
  const std::vector<double> p = probs(logits, Temperature(1.0));
  const std::vector<double> lp = log_probs(logits, Temperature(1.0));
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) h -= p[i] * lp[i];
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = -p[i] * (lp[i] + h);
  return g;
}

Context Rollout::context_at(std::size_t t) const {
  return Context{query_id, std::vector<Token>(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(t))};
}

double Rollout::mean_token_entropy() const {
  if (token_entropies.empty()) return 0.0;
  return std::accumulate(token_entropies.begin(), token_entropies.end(), 0.0) /
         static_cast<double>(token_entropies.size());
}

int Rollout::reward_or_throw() const {
  if (!reward) throw ContractError("rollout has no reward; call Task::verify first");
  return *reward;
}

Rollout sample_response(const LogitTable& policy, const Vocab& vocab, std::uint32_t query_id,
                        Temperature t, int max_len, RngStream& rng) {
  if (vocab.size != policy.vocab_size()) throw InvalidInput("vocab/policy size mismatch");
  if (max_len > policy.max_len()) throw InvalidInput("max_len exceeds policy max_len");
  Rollout r;
  r.query_id = query_id;
  r.sampling_temperature = t.value();
  r.seed_tag = rng.tag();
  Context ctx{query_id, {}};
  const Temperature base(1.0);
  for (int step = 0; step < max_len; ++step) {
    const auto logits = policy.logits(ctx);
    const std::vector<double> behavior = probs(logits, t);
    const std::vector<double> base_lp = log_probs(logits, base);
    const std::size_t tok = rng.categorical(behavior);
    const std::vector<double> behavior_lp = log_probs(logits, t);
    r.tokens.push_back(static_cast<Token>(tok));
    r.behavior_logprobs.push_back(behavior_lp[tok]);
    r.base_logprobs_old.push_back(base_lp[tok]);
    r.token_entropies.push_back(token_entropy(probs(logits, base)));
    if (vocab.eos && tok == *vocab.eos) break;
    ctx.prefix.push_back(static_cast<Token>(tok));
  }
  return r;
}

}  // namespace aepo
