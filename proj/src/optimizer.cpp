#include "aepo/optimizer.hpp"

#include <cmath>
#include <span>
#include <string>

#include "aepo/error.hpp"

namespace aepo {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw InvalidInput("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidInput("moment decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidInput("optimizer epsilon must be > 0");
}

namespace {

void add_checked(std::span<double> row, std::size_t i, double delta, const Context& ctx) {
  const double next = row[i] + delta;
  if (!std::isfinite(next)) {
    throw NumericalError("optimizer step produced a non-finite logit at query " + std::to_string(ctx.query_id) +
                         ", prefix length " + std::to_string(ctx.prefix.size()) + ", token " + std::to_string(i));
  }
  row[i] = next;
}

}  // namespace

void apply_ascent(LogitTable& policy, OptimizerState& state, const GradAccumulator& grad,
                  const OptimizerConfig& cfg) {
  ++state.t;
  if (cfg.kind == OptimizerKind::kSgd) {
    if (cfg.learning_rate == 0.0) return;
    for (const auto& [ctx, g] : grad.entries()) {
      auto row = policy.mutable_logits(ctx);
      for (std::size_t i = 0; i < row.size(); ++i) add_checked(row, i, cfg.learning_rate * g[i], ctx);
    }
    return;
  }

  const auto width = static_cast<std::size_t>(policy.vocab_size());
  for (const auto& [ctx, g] : grad.entries()) {
    state.m.try_emplace(ctx, width, 0.0);
    state.v.try_emplace(ctx, width, 0.0);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [ctx, m] : state.m) {
    auto& v = state.v.at(ctx);
    const auto g = grad.row(ctx);
    for (std::size_t i = 0; i < width; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    }
    if (cfg.learning_rate == 0.0) continue;
    auto row = policy.mutable_logits(ctx);
    for (std::size_t i = 0; i < width; ++i) {
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      add_checked(row, i, cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon), ctx);
    }
  }
}

}  // namespace aepo
