#include "aepo/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "aepo/error.hpp"

namespace aepo {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_optional(const json& obj, const char* key, std::optional<double>& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(obj, key, v, where);
  out = v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const TrainConfig& c) {
  json task = {
      {"kind", to_string(c.task.kind)},
      {"vocab_size", c.task.vocab.size},
      {"eos", c.task.vocab.eos ? json(*c.task.vocab.eos) : json(nullptr)},
      {"response_len", c.task.response_len},
      {"modulus", c.task.modulus},
      {"solutions_per_query", c.task.solutions_per_query},
      {"num_queries", c.task.num_queries},
      {"seed", c.task.seed},
  };
  json loss = {
      {"variant", to_string(c.loss.variant)}, {"epsilon", c.loss.epsilon}, {"alpha", c.loss.alpha},
      {"lambda", c.loss.lambda},              {"beta", c.loss.beta},       {"kappa", c.loss.kappa},
      {"policy_term", c.loss.policy_term},
  };
  json controller = {
      {"target_entropy", c.controller.target_entropy},
      {"t_high", c.controller.t_high},
      {"t_low", c.controller.t_low},
      {"mix_count", c.controller.mix_count},
      {"sample_budget", c.controller.sample_budget},
      {"deadband", c.controller.deadband},
      {"fixed_temperature", optional_json(c.controller.fixed_temperature)},
  };
  json optimizer = {
      {"kind", to_string(c.optimizer.kind)}, {"learning_rate", c.optimizer.learning_rate},
      {"beta1", c.optimizer.beta1},          {"beta2", c.optimizer.beta2},
      {"epsilon", c.optimizer.epsilon},
  };
  json trainer = {
      {"steps", c.steps},
      {"queries_per_batch", c.queries_per_batch},
      {"group_size", c.group_size},
      {"inner_epochs", c.inner_epochs},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
      {"checkpoint_every", c.checkpoint_every},
      {"optimizer", optimizer},
  };
  return json{{"schema_version", kSchemaVersion},
              {"task", task},
              {"loss", loss},
              {"controller", controller},
              {"trainer", trainer}};
}

TrainConfig config_from_json(const json& doc) {
  reject_unknown(doc, {"schema_version", "task", "loss", "controller", "trainer"}, "config");
  int schema = kSchemaVersion;
  read(doc, "schema_version", schema, "config");
  if (schema != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema));
  }
  TrainConfig c = default_train_config();

  if (doc.contains("task")) {
    const json& t = doc["task"];
    reject_unknown(t, {"kind", "vocab_size", "eos", "response_len", "modulus", "solutions_per_query",
                       "num_queries", "seed"},
                   "task");
    std::string kind = to_string(c.task.kind);
    read(t, "kind", kind, "task");
    try {
      c.task.kind = task_kind_from_string(kind);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    read(t, "vocab_size", c.task.vocab.size, "task");
    if (t.contains("eos")) {
      if (t["eos"].is_null()) {
        c.task.vocab.eos.reset();
      } else {
        int eos = 0;
        read(t, "eos", eos, "task");
        if (eos < 0) throw ConfigError("task.eos must be >= 0");
        c.task.vocab.eos = static_cast<Token>(eos);
      }
    }
    read(t, "response_len", c.task.response_len, "task");
    read(t, "modulus", c.task.modulus, "task");
    read(t, "solutions_per_query", c.task.solutions_per_query, "task");
    read(t, "num_queries", c.task.num_queries, "task");
    read(t, "seed", c.task.seed, "task");
  }

  if (doc.contains("loss")) {
    const json& l = doc["loss"];
    reject_unknown(l, {"variant", "epsilon", "alpha", "lambda", "beta", "kappa", "policy_term"}, "loss");
    std::string variant = to_string(c.loss.variant);
    read(l, "variant", variant, "loss");
    try {
      c.loss.variant = variant_from_string(variant);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    read(l, "epsilon", c.loss.epsilon, "loss");
    read(l, "alpha", c.loss.alpha, "loss");
    read(l, "lambda", c.loss.lambda, "loss");
    read(l, "beta", c.loss.beta, "loss");
    read(l, "kappa", c.loss.kappa, "loss");
    read(l, "policy_term", c.loss.policy_term, "loss");
  }

  if (doc.contains("controller")) {
    const json& k = doc["controller"];
    reject_unknown(k, {"target_entropy", "t_high", "t_low", "mix_count", "sample_budget", "deadband",
                       "fixed_temperature"},
                   "controller");
    read(k, "target_entropy", c.controller.target_entropy, "controller");
    read(k, "t_high", c.controller.t_high, "controller");
    read(k, "t_low", c.controller.t_low, "controller");
    read(k, "mix_count", c.controller.mix_count, "controller");
    read(k, "sample_budget", c.controller.sample_budget, "controller");
    read(k, "deadband", c.controller.deadband, "controller");
    read_optional(k, "fixed_temperature", c.controller.fixed_temperature, "controller");
  }

  if (doc.contains("trainer")) {
    const json& tr = doc["trainer"];
    reject_unknown(tr, {"steps", "queries_per_batch", "group_size", "inner_epochs", "seed", "eval_every",
                        "checkpoint_every", "optimizer"},
                   "trainer");
    read(tr, "steps", c.steps, "trainer");
    read(tr, "queries_per_batch", c.queries_per_batch, "trainer");
    read(tr, "group_size", c.group_size, "trainer");
    read(tr, "inner_epochs", c.inner_epochs, "trainer");
    read(tr, "seed", c.seed, "trainer");
    read(tr, "eval_every", c.eval_every, "trainer");
    read(tr, "checkpoint_every", c.checkpoint_every, "trainer");
    if (tr.contains("optimizer")) {
      const json& o = tr["optimizer"];
      reject_unknown(o, {"kind", "learning_rate", "beta1", "beta2", "epsilon"}, "trainer.optimizer");
      std::string kind = to_string(c.optimizer.kind);
      read(o, "kind", kind, "trainer.optimizer");
      try {
        c.optimizer.kind = optimizer_kind_from_string(kind);
      } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
      }
      read(o, "learning_rate", c.optimizer.learning_rate, "trainer.optimizer");
      read(o, "beta1", c.optimizer.beta1, "trainer.optimizer");
      read(o, "beta2", c.optimizer.beta2, "trainer.optimizer");
      read(o, "epsilon", c.optimizer.epsilon, "trainer.optimizer");
    }
  }

  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path.string() + "'");
  out << to_json(cfg).dump(2) << "\n";
}

void apply_override(json& doc, const std::string& dotted_path, const std::string& value) {
  if (dotted_path.empty()) throw ConfigError("empty override path");
  json* node = &doc;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path '" + dotted_path + "' crosses a non-object");
    node = &(*node)[parts[i]];
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  if (!node->is_object() && !node->is_null()) {
    throw ConfigError("override path '" + dotted_path + "' crosses a non-object");
  }
  (*node)[parts.back()] = parsed;
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace aepo
