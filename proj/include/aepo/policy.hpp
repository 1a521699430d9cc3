#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "aepo/rng.hpp"

namespace aepo {

using Token = std::uint16_t;

struct Vocab {
  int size = 0;
  // Terminates a response early when sampled. Fixed-length tasks leave it unset.
  std::optional<Token> eos;

  void validate() const;
};

class Temperature {
 public:
  explicit Temperature(double value);
  double value() const { return value_; }
  friend bool operator==(Temperature, Temperature) = default;

 private:
  double value_;
};

// Conditioning state of one generation step: the query plus the response
// generated so far. Ordered lexicographically by (query_id, prefix).
struct Context {
  std::uint32_t query_id = 0;
  std::vector<Token> prefix;

  friend auto operator<=>(const Context&, const Context&) = default;
  friend bool operator==(const Context&, const Context&) = default;
};

// Tabular softmax policy: one logit vector per context. Contexts that were
// never written read as all-zero logits, i.e. the uniform distribution.
class LogitTable {
 public:
  using Map = std::map<Context, std::vector<double>>;

  LogitTable(int vocab_size, int max_len);

  int vocab_size() const { return vocab_size_; }
  int max_len() const { return max_len_; }

  std::span<const double> logits(const Context& ctx) const;
  // Creates a zero row on first access.
  std::span<double> mutable_logits(const Context& ctx);
  void set_logits(const Context& ctx, std::span<const double> values);

  const Map& entries() const { return table_; }
  std::size_t size() const { return table_.size(); }

  friend bool operator==(const LogitTable&, const LogitTable&) = default;

 private:
  int vocab_size_;
  int max_len_;
  Map table_;
  std::vector<double> zeros_;
};

// softmax(logits / T) with max subtraction.
std::vector<double> probs(std::span<const double> logits, Temperature t);
std::vector<double> log_probs(std::span<const double> logits, Temperature t);

// Shannon entropy in nats, 0 log 0 = 0.
double token_entropy(std::span<const double> dist);

// d log pi^T(token) / d logits = (e_token - pi^T) / T.
std::vector<double> grad_log_pi(std::span<const double> logits, Temperature t, Token token);

// d H(pi) / d logits at T = 1: -pi_b (log pi_b + H).
std::vector<double> entropy_grad(std::span<const double> logits);

struct Rollout {
  std::uint32_t query_id = 0;
  std::vector<Token> tokens;
  std::vector<double> behavior_logprobs;  // log pi_old^T at the sampling temperature
  std::vector<double> base_logprobs_old;  // log pi_old at T = 1
  std::vector<double> token_entropies;    // H_t of pi_old at T = 1
  std::optional<int> reward;              // filled by Task::verify
  double sampling_temperature = 1.0;
  std::uint64_t seed_tag = 0;

  std::size_t length() const { return tokens.size(); }
  Context context_at(std::size_t t) const;
  double mean_token_entropy() const;
  int reward_or_throw() const;
};

// Autoregressive sampling until eos (included in the response) or max_len tokens.
Rollout sample_response(const LogitTable& policy, const Vocab& vocab, std::uint32_t query_id,
                        Temperature t, int max_len, RngStream& rng);

}  // namespace aepo
