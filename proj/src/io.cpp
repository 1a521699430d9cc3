#include "aepo/io.hpp"

#include <istream>
#include <ostream>

#include "aepo/config.hpp"
#include "aepo/error.hpp"

namespace aepo {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kCheckpointTag = "aepo-checkpoint";

const std::vector<std::string> kRequired = {
    "step",         "entropy_estimate", "selected_temperature", "mean_batch_reward", "degenerate_group_fraction",
    "positives_found", "draws_used",    "clip_fraction",        "grad_norm_grpo",    "grad_norm_reg",
};

json context_json(const Context& ctx) {
  return json{{"query_id", ctx.query_id}, {"prefix", ctx.prefix}};
}

Context context_from(const json& row) {
  Context ctx;
  ctx.query_id = row.at("query_id").get<std::uint32_t>();
  ctx.prefix = row.at("prefix").get<std::vector<Token>>();
  return ctx;
}

}  // namespace

ordered_json step_record_to_json(const StepRecord& r, const std::string& config_hash) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = config_hash;
  j["step"] = r.step;
  j["entropy_estimate"] = r.entropy_estimate;
  j["selected_temperature"] = r.selected_temperature;
  j["mean_batch_reward"] = r.mean_batch_reward;
  j["degenerate_group_fraction"] = r.degenerate_group_fraction;
  j["positives_found"] = r.positives_found;
  j["draws_used"] = r.draws_used;
  j["clip_fraction"] = r.clip_fraction;
  j["grad_norm_grpo"] = r.grad_norm_grpo;
  j["grad_norm_reg"] = r.grad_norm_reg;
  if (r.eval_success) j["eval_success"] = *r.eval_success;
  if (r.exact_entropy) j["exact_entropy"] = *r.exact_entropy;
  return j;
}

StepRecord step_record_from_json(const json& j) {
  if (!j.is_object()) throw DataError("telemetry line is not a JSON object");
  for (const auto& key : kRequired) {
    if (!j.contains(key)) throw DataError("telemetry line is missing '" + key + "'");
  }
  StepRecord r;
  try {
    r.step = j.at("step").get<std::uint64_t>();
    r.entropy_estimate = j.at("entropy_estimate").get<double>();
    r.selected_temperature = j.at("selected_temperature").get<double>();
    r.mean_batch_reward = j.at("mean_batch_reward").get<double>();
    r.degenerate_group_fraction = j.at("degenerate_group_fraction").get<double>();
    r.positives_found = j.at("positives_found").get<int>();
    r.draws_used = j.at("draws_used").get<int>();
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.grad_norm_grpo = j.at("grad_norm_grpo").get<double>();
    r.grad_norm_reg = j.at("grad_norm_reg").get<double>();
    if (j.contains("eval_success") && !j["eval_success"].is_null()) r.eval_success = j["eval_success"].get<double>();
    if (j.contains("exact_entropy") && !j["exact_entropy"].is_null()) {
      r.exact_entropy = j["exact_entropy"].get<double>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("telemetry field has the wrong type: ") + e.what());
  }
  return r;
}

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path, std::string config_hash)
    : out_(path, std::ios::app), config_hash_(std::move(config_hash)) {
  if (!out_) throw DataError("cannot open telemetry file '" + path.string() + "'");
}

void TelemetryWriter::write(const StepRecord& rec) {
  out_ << step_record_to_json(rec, config_hash_).dump() << "\n";
  out_.flush();
}

std::vector<StepRecord> read_telemetry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read telemetry file '" + path.string() + "'");
  std::vector<StepRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(step_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), lineno);
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return out;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "schema_version",   "config_hash",     "step",          "entropy_estimate", "exact_entropy",
      "selected_temperature", "mean_batch_reward", "degenerate_group_fraction", "positives_found",
      "draws_used",       "clip_fraction",   "grad_norm_grpo", "grad_norm_reg",   "eval_success",
  };
  return cols;
}

void export_csv(std::istream& jsonl, std::ostream& csv) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(jsonl, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      (void)step_record_from_json(j);
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), lineno);
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    }
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) csv << ",";
      auto it = j.find(cols[i]);
      if (it == j.end() || it->is_null()) continue;
      // Numbers go through the JSON serializer so the text is identical to
      // (and round-trips exactly like) the telemetry value.
      csv << (it->is_string() ? it->get<std::string>() : it->dump());
    }
    csv << "\n";
  }
}

json checkpoint_to_json(const Checkpoint& c) {
  json rows = json::array();
  for (const auto& [ctx, logits] : c.policy.entries()) {
    json row = context_json(ctx);
    row["logits"] = logits;
    rows.push_back(std::move(row));
  }
  json moments = json::array();
  for (const auto& [ctx, m] : c.optimizer.m) {
    json row = context_json(ctx);
    row["m"] = m;
    row["v"] = c.optimizer.v.at(ctx);
    moments.push_back(std::move(row));
  }
  return json{
      {"format", kCheckpointTag},
      {"format_version", Checkpoint::kFormatVersion},
      {"config_hash", c.config_hash},
      {"vocab_size", c.policy.vocab_size()},
      {"max_len", c.policy.max_len()},
      {"seed", c.seed},
      {"step", c.step},
      {"last_temperature", c.last_temperature ? json(*c.last_temperature) : json(nullptr)},
      {"policy", rows},
      {"optimizer", json{{"t", c.optimizer.t}, {"moments", moments}}},
  };
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kCheckpointTag) throw DataError("not a checkpoint file");
    const int version = doc.at("format_version").get<int>();
    if (version != Checkpoint::kFormatVersion) {
      throw DataError("unsupported checkpoint format_version " + std::to_string(version));
    }
    Checkpoint c;
    c.config_hash = doc.at("config_hash").get<std::string>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.step = doc.at("step").get<std::uint64_t>();
    if (!doc.at("last_temperature").is_null()) c.last_temperature = doc["last_temperature"].get<double>();
    c.policy = LogitTable(doc.at("vocab_size").get<int>(), doc.at("max_len").get<int>());
    for (const auto& row : doc.at("policy")) {
      c.policy.set_logits(context_from(row), row.at("logits").get<std::vector<double>>());
    }
    const json& opt = doc.at("optimizer");
    c.optimizer.t = opt.at("t").get<std::uint64_t>();
    for (const auto& row : opt.at("moments")) {
      const Context ctx = context_from(row);
      c.optimizer.m[ctx] = row.at("m").get<std::vector<double>>();
      c.optimizer.v[ctx] = row.at("v").get<std::vector<double>>();
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const InvalidInput& e) {
    throw DataError(std::string("invalid checkpoint contents: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out << checkpoint_to_json(ckpt).dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace aepo
