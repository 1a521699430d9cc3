#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aepo/algorithms.hpp"
#include "aepo/policy.hpp"

namespace aepo {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Moment buffers exist only for contexts that have received a gradient.
struct OptimizerState {
  std::uint64_t t = 0;
  std::map<Context, std::vector<double>> m;
  std::map<Context, std::vector<double>> v;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// One ascent step: policy += update(grad). Adam updates every context that
// owns moment buffers, treating absent gradient rows as zero.
void apply_ascent(LogitTable& policy, OptimizerState& state, const GradAccumulator& grad,
                  const OptimizerConfig& cfg);

}  // namespace aepo
