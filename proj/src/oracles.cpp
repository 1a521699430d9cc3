#include "aepo/oracles.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include <boost/math/distributions/binomial.hpp>

#include "aepo/error.hpp"

namespace aepo {

namespace {

struct PathStep {
  Context ctx;
  std::vector<double> p;  // pi(. | ctx) at T = 1
  Token token;
};

// Depth-first walk over every response of one query. `leaf` receives the
// response probability and the path (contexts, distributions, tokens).
void walk_responses(const LogitTable& policy, const Task& task, std::uint32_t query_id,
                    const std::function<void(double, std::span<const PathStep>)>& leaf) {
  if (!task.enumerable()) {
    throw CapacityError("response space V^L = " + std::to_string(task.response_space_size()) +
                        " exceeds enumeration limit");
  }
  const int max_len = task.response_len();
  const auto& eos = task.vocab().eos;
  std::vector<PathStep> path;
  path.reserve(static_cast<std::size_t>(max_len));

  std::function<void(Context&, double)> rec = [&](Context& ctx, double prob) {
    std::vector<double> p = probs(policy.logits(ctx), Temperature(1.0));
    for (std::size_t a = 0; a < p.size(); ++a) {
      const double child = prob * p[a];
      path.push_back(PathStep{ctx, p, static_cast<Token>(a)});
      const bool stop = (eos && a == *eos) || static_cast<int>(ctx.prefix.size()) + 1 == max_len;
      if (stop) {
        leaf(child, path);
      } else {
        ctx.prefix.push_back(static_cast<Token>(a));
        rec(ctx, child);
        ctx.prefix.pop_back();
      }
      path.pop_back();
    }
  };
  Context root{query_id, {}};
  rec(root, 1.0);
}

std::vector<Token> tokens_of(std::span<const PathStep> path) {
  std::vector<Token> out;
  out.reserve(path.size());
  for (const auto& s : path) out.push_back(s.token);
  return out;
}

void add_score(GradAccumulator& acc, std::span<const PathStep> path, double weight) {
  if (weight == 0.0) return;
  for (const auto& s : path) {
    std::vector<double> g(s.p.size());
    for (std::size_t b = 0; b < g.size(); ++b) g[b] = -s.p[b];
    g[s.token] += 1.0;
    acc.add(s.ctx, g, weight);
  }
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double exact_objective(const LogitTable& policy, const Task& task) {
  double total = 0.0;
  for (const Query& q : task.queries()) {
    double j = 0.0;
    walk_responses(policy, task, q.id, [&](double prob, std::span<const PathStep> path) {
      if (task.verify(q, tokens_of(path)) == 1) j += prob;
    });
    total += j;
  }
  return total / static_cast<double>(task.queries().size());
}

double exact_entropy(const LogitTable& policy, const Task& task) {
  double total = 0.0;
  for (const Query& q : task.queries()) {
    double h = 0.0;
    walk_responses(policy, task, q.id, [&](double prob, std::span<const PathStep> path) {
      double s = 0.0;
      for (const auto& step : path) s += token_entropy(step.p);
      h += prob * s / static_cast<double>(path.size());
    });
    total += h;
  }
  return total / static_cast<double>(task.queries().size());
}

GradAccumulator exact_gradient(const LogitTable& policy, const Task& task, bool length_normalized) {
  GradAccumulator acc(policy.vocab_size());
  const double per_query = 1.0 / static_cast<double>(task.queries().size());
  for (const Query& q : task.queries()) {
    walk_responses(policy, task, q.id, [&](double prob, std::span<const PathStep> path) {
      const int reward = task.verify(q, tokens_of(path));
      const double len = length_normalized ? static_cast<double>(path.size()) : 1.0;
      add_score(acc, path, per_query * prob * reward / len);
    });
  }
  return acc;
}

double expected_group_advantage(int reward, double success_prob, int group_size) {
  if (group_size < 2) throw InvalidInput("group size must be >= 2");
  const int others = group_size - 1;
  double expectation = 0.0;
  for (int m = 0; m <= others; ++m) {
    double weight;
    if (success_prob <= 0.0) {
      weight = m == 0 ? 1.0 : 0.0;
    } else if (success_prob >= 1.0) {
      weight = m == others ? 1.0 : 0.0;
    } else {
      weight = boost::math::pdf(boost::math::binomial_distribution<double>(others, success_prob), m);
    }
    const double mean = static_cast<double>(reward + m) / group_size;
    const double std = std::sqrt(mean * (1.0 - mean));
    if (std < 1e-8) continue;
    expectation += weight * (reward - mean) / std;
  }
  return expectation;
}

GradAccumulator exact_grpo_gradient(const LogitTable& policy, const Task& task, int group_size) {
  GradAccumulator acc(policy.vocab_size());
  const double per_query = 1.0 / static_cast<double>(task.queries().size());
  for (const Query& q : task.queries()) {
    double p_success = 0.0;
    walk_responses(policy, task, q.id, [&](double prob, std::span<const PathStep> path) {
      if (task.verify(q, tokens_of(path)) == 1) p_success += prob;
    });
    const double adv_pos = expected_group_advantage(1, p_success, group_size);
    const double adv_neg = expected_group_advantage(0, p_success, group_size);
    walk_responses(policy, task, q.id, [&](double prob, std::span<const PathStep> path) {
      const double adv = task.verify(q, tokens_of(path)) == 1 ? adv_pos : adv_neg;
      add_score(acc, path, per_query * prob * adv / static_cast<double>(path.size()));
    });
  }
  return acc;
}

void FDConfig::validate() const {
  if (!(delta >= 1e-7 && delta <= 1e-3)) throw InvalidInput("finite-difference delta must lie in [1e-7, 1e-3]");
}

GradAccumulator fd_gradient(const std::function<double(const LogitTable&)>& f, const LogitTable& at,
                            std::span<const Context> contexts, const FDConfig& cfg) {
  cfg.validate();
  std::vector<Context> coords(contexts.begin(), contexts.end());
  if (coords.empty()) {
    for (const auto& [ctx, row] : at.entries()) coords.push_back(ctx);
  }
  GradAccumulator acc(at.vocab_size());
  LogitTable work = at;
  for (const Context& ctx : coords) {
    std::vector<double> row(work.logits(ctx).begin(), work.logits(ctx).end());
    std::vector<double> g(row.size());
    for (std::size_t b = 0; b < row.size(); ++b) {
      std::vector<double> perturbed = row;
      perturbed[b] = row[b] + cfg.delta;
      work.set_logits(ctx, perturbed);
      const double up = f(work);
      perturbed[b] = row[b] - cfg.delta;
      work.set_logits(ctx, perturbed);
      const double down = f(work);
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("fd_gradient: non-finite evaluation at query " + std::to_string(ctx.query_id) +
                             ", prefix length " + std::to_string(ctx.prefix.size()) + ", coordinate " +
                             std::to_string(b));
      }
      g[b] = (up - down) / (2.0 * cfg.delta);
    }
    work.set_logits(ctx, row);
    acc.add(ctx, g);
  }
  return acc;
}

std::vector<double> fd_vector(const std::function<double(std::span<const double>)>& f, std::span<const double> at,
                              const FDConfig& cfg) {
  cfg.validate();
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + cfg.delta;
    const double up = f(x);
    x[i] = orig - cfg.delta;
    const double down = f(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("fd_vector: non-finite evaluation at coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * cfg.delta);
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b, double abs_floor) {
  if (a.size() != b.size()) throw InvalidInput("relative_error: size mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double diff = norm2(d);
  const double scale = std::max(norm2(a), norm2(b));
  if (scale <= abs_floor && diff <= abs_floor) return 0.0;
  return diff / std::max(scale, abs_floor);
}

double relative_error(const GradAccumulator& a, const GradAccumulator& b, double abs_floor) {
  std::set<Context> keys;
  for (const auto& [ctx, row] : a.entries()) keys.insert(ctx);
  for (const auto& [ctx, row] : b.entries()) keys.insert(ctx);
  std::vector<double> va, vb;
  for (const Context& ctx : keys) {
    auto ra = a.row(ctx);
    auto rb = b.row(ctx);
    va.insert(va.end(), ra.begin(), ra.end());
    vb.insert(vb.end(), rb.begin(), rb.end());
  }
  return relative_error(va, vb, abs_floor);
}

void LemmaProbe::validate() const {
  if (logits.size() < 2) throw InvalidInput("LemmaProbe needs at least 2 actions");
  if (advantage.size() != logits.size()) throw InvalidInput("LemmaProbe advantage has wrong length");
  for (double a : advantage) {
    if (!std::isfinite(a)) throw InvalidInput("LemmaProbe advantage must be finite");
  }
  if (!(eta > 0.0)) throw InvalidInput("LemmaProbe step size must be > 0");
}

std::vector<double> npg_step(const LemmaProbe& probe) {
  probe.validate();
  std::vector<double> out = probe.logits;
  for (std::size_t a = 0; a < out.size(); ++a) out[a] += probe.eta * probe.advantage[a];
  return out;
}

double predicted_entropy_delta(const LemmaProbe& probe) {
  probe.validate();
  const std::vector<double> p = probs(probe.logits, Temperature(1.0));
  const std::vector<double> lp = log_probs(probe.logits, Temperature(1.0));
  double ex = 0.0, ey = 0.0, exy = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    ex += p[a] * lp[a];
    ey += p[a] * probe.advantage[a];
    exy += p[a] * lp[a] * probe.advantage[a];
  }
  return -probe.eta * (exy - ex * ey);
}

double actual_entropy_delta(const LemmaProbe& probe) {
  const double before = token_entropy(probs(probe.logits, Temperature(1.0)));
  const double after = token_entropy(probs(npg_step(probe), Temperature(1.0)));
  return after - before;
}

std::vector<double> lemma_error_scaling(const LemmaProbe& probe, std::span<const double> etas) {
  std::vector<double> errors;
  errors.reserve(etas.size());
  for (double eta : etas) {
    LemmaProbe p = probe;
    p.eta = eta;
    errors.push_back(std::abs(actual_entropy_delta(p) - predicted_entropy_delta(p)));
  }
  return errors;
}

}  // namespace aepo
