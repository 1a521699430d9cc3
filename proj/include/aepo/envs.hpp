#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aepo/policy.hpp"
#include "aepo/rng.hpp"

namespace aepo {

enum class TaskKind { kCopy, kModSum, kMultiSolution };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  Vocab vocab{4, std::nullopt};
  int response_len = 3;
  int modulus = 0;              // mod_sum only
  int solutions_per_query = 1;  // multi_solution only
  int num_queries = 8;
  // Seeds the query payloads and, for multi_solution, each query's accepted set.
  std::uint64_t seed = 0;

  void validate() const;
};

struct Query {
  std::uint32_t id = 0;
  std::vector<Token> payload;
};

// Hard cap on V^L for exhaustive enumeration.
inline constexpr std::uint64_t kEnumerationLimit = 1'000'000;

// A verifiable-reward task with a fixed query pool. Immutable after
// construction, so all member functions are reentrant.
class Task {
 public:
  explicit Task(TaskSpec spec);

  const TaskSpec& spec() const { return spec_; }
  const Vocab& vocab() const { return spec_.vocab; }
  int response_len() const { return spec_.response_len; }
  const std::vector<Query>& queries() const { return queries_; }
  const Query& query(std::uint32_t id) const;

  Query sample_query(RngStream& rng) const;
  int verify(const Query& query, std::span<const Token> response) const;
  int verify(std::uint32_t query_id, std::span<const Token> response) const {
    return verify(query(query_id), response);
  }

  // Number of fixed-length responses, V^L, saturating at UINT64_MAX.
  std::uint64_t response_space_size() const;
  bool enumerable() const { return response_space_size() <= kEnumerationLimit; }

  // All V^L responses of length L in lexicographic order. Throws CapacityError
  // past kEnumerationLimit.
  std::vector<std::vector<Token>> enumerate_responses(const Query& query) const;
  void for_each_response(const std::function<void(std::span<const Token>)>& fn) const;

  // Responses with reward 1 for this query, in lexicographic order.
  std::vector<std::vector<Token>> accepted_set(const Query& query) const;

 private:
  TaskSpec spec_;
  std::vector<Query> queries_;
  // multi_solution: sorted lexicographic indices of each query's accepted responses.
  std::vector<std::vector<std::uint64_t>> accepted_;
};

}  // namespace aepo
