#include "aepo/envs.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "aepo/error.hpp"

namespace aepo {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kModSum: return "mod_sum";
    case TaskKind::kMultiSolution: return "multi_solution";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "mod_sum") return TaskKind::kModSum;
  if (name == "multi_solution") return TaskKind::kMultiSolution;
  throw InvalidInput("unknown task kind '" + name + "'");
}

namespace {

std::uint64_t saturating_pow(std::uint64_t base, int exp) {
  std::uint64_t out = 1;
  for (int i = 0; i < exp; ++i) {
    if (out > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    out *= base;
  }
  return out;
}

}  // namespace

void TaskSpec::validate() const {
  vocab.validate();
  if (response_len < 1) throw InvalidInput("response_len must be >= 1");
  if (num_queries < 1) throw InvalidInput("query pool must be non-empty");
  const std::uint64_t space = saturating_pow(static_cast<std::uint64_t>(vocab.size), response_len);
  switch (kind) {
    case TaskKind::kCopy:
      break;
    case TaskKind::kModSum:
      if (modulus < 2 || modulus >= vocab.size) {
        throw InvalidInput("mod_sum requires 2 <= modulus < vocab size");
      }
      break;
    case TaskKind::kMultiSolution:
      if (solutions_per_query < 1 || static_cast<std::uint64_t>(solutions_per_query) > space) {
        throw InvalidInput("multi_solution requires 1 <= solutions_per_query <= V^L");
      }
      if (static_cast<std::uint64_t>(solutions_per_query) > kEnumerationLimit) {
        throw CapacityError("solutions_per_query exceeds " + std::to_string(kEnumerationLimit));
      }
      break;
  }
  if (vocab.eos) {
    // Every response token must be able to carry any value the verifier expects.
    if (kind != TaskKind::kMultiSolution) {
      throw InvalidInput("eos is only supported for multi_solution tasks");
    }
  }
}

Task::Task(TaskSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int v = spec_.vocab.size;
  const int payload_alphabet = spec_.kind == TaskKind::kModSum ? spec_.modulus : v;
  queries_.reserve(static_cast<std::size_t>(spec_.num_queries));
  for (int q = 0; q < spec_.num_queries; ++q) {
    RngStream rng(spec_.seed, {0x7061796cULL, static_cast<std::uint64_t>(q)});
    Query query;
    query.id = static_cast<std::uint32_t>(q);
    const int payload_len = spec_.kind == TaskKind::kModSum ? 2 : spec_.response_len;
    for (int i = 0; i < payload_len; ++i) {
      Token t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(payload_alphabet)));
      if (spec_.vocab.eos && t == *spec_.vocab.eos) t = static_cast<Token>((t + 1) % v);
      query.payload.push_back(t);
    }
    queries_.push_back(std::move(query));

    if (spec_.kind == TaskKind::kMultiSolution) {
      // A seeded permutation of the V^L sequence indices; the accepted set is
      // the k sequences it sends to the lexicographically smallest positions.
      // Floyd's algorithm draws that k-subset without materializing the
      // permutation.
      RngStream perm_rng(spec_.seed, {0x7065726dULL, static_cast<std::uint64_t>(q)});
      const std::uint64_t n = response_space_size();
      const auto k = static_cast<std::uint64_t>(spec_.solutions_per_query);
      std::set<std::uint64_t> chosen;
      for (std::uint64_t j = n - k; j < n; ++j) {
        const std::uint64_t t = perm_rng.below(j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
      }
      accepted_.emplace_back(chosen.begin(), chosen.end());
    }
  }
}

const Query& Task::query(std::uint32_t id) const {
  if (id >= queries_.size()) throw InvalidInput("query id out of range");
  return queries_[id];
}

Query Task::sample_query(RngStream& rng) const {
  return queries_[rng.below(queries_.size())];
}

int Task::verify(const Query& query, std::span<const Token> response) const {
  const int v = spec_.vocab.size;
  for (Token t : response) {
    if (t >= v) throw InvalidInput("response token out of range");
  }
  if (response.size() != static_cast<std::size_t>(spec_.response_len)) return 0;
  switch (spec_.kind) {
    case TaskKind::kCopy:
      return std::equal(response.begin(), response.end(), query.payload.begin(), query.payload.end()) ? 1 : 0;
    case TaskKind::kModSum: {
      // Big-endian base-V digits, zero padded to L.
      int target = (query.payload[0] + query.payload[1]) % spec_.modulus;
      for (std::size_t i = response.size(); i-- > 0;) {
        if (response[i] != target % v) return 0;
        target /= v;
      }
      return target == 0 ? 1 : 0;
    }
    case TaskKind::kMultiSolution: {
      if (spec_.vocab.eos && std::find(response.begin(), response.end(), *spec_.vocab.eos) != response.end()) {
        return 0;
      }
      std::uint64_t index = 0;
      for (Token t : response) index = index * static_cast<std::uint64_t>(v) + t;
      const auto& acc = accepted_[query.id];
      return std::binary_search(acc.begin(), acc.end(), index) ? 1 : 0;
    }
  }
  return 0;
}

std::uint64_t Task::response_space_size() const {
  return saturating_pow(static_cast<std::uint64_t>(spec_.vocab.size), spec_.response_len);
}

void Task::for_each_response(const std::function<void(std::span<const Token>)>& fn) const {
  const std::uint64_t n = response_space_size();
  if (n > kEnumerationLimit) {
    throw CapacityError("response space V^L = " + std::to_string(n) + " exceeds enumeration limit " +
                        std::to_string(kEnumerationLimit));
  }
  const auto len = static_cast<std::size_t>(spec_.response_len);
  const auto v = static_cast<Token>(spec_.vocab.size);
  std::vector<Token> seq(len, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    fn(seq);
    // Odometer increment, last position fastest.
    for (std::size_t p = len; p-- > 0;) {
      if (++seq[p] < v) break;
      seq[p] = 0;
    }
  }
}

std::vector<std::vector<Token>> Task::enumerate_responses(const Query& query) const {
  (void)query;  // the response space does not depend on the query
  std::vector<std::vector<Token>> out;
  for_each_response([&](std::span<const Token> r) { out.emplace_back(r.begin(), r.end()); });
  return out;
}

std::vector<std::vector<Token>> Task::accepted_set(const Query& query) const {
  std::vector<std::vector<Token>> out;
  for_each_response([&](std::span<const Token> r) {
    if (verify(query, r) == 1) out.emplace_back(r.begin(), r.end());
  });
  return out;
}

}  // namespace aepo
