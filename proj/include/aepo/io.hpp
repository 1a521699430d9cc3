#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "aepo/trainer.hpp"

namespace aepo {

// Telemetry: one JSON object per line and per step. Field order is fixed;
// eval_success / exact_entropy appear only on eval steps.
nlohmann::ordered_json step_record_to_json(const StepRecord& rec, const std::string& config_hash);
StepRecord step_record_from_json(const nlohmann::json& obj);

// Appends lines to a JSONL file; never truncates.
class TelemetryWriter {
 public:
  TelemetryWriter(const std::filesystem::path& path, std::string config_hash);
  void write(const StepRecord& rec);

 private:
  std::ofstream out_;
  std::string config_hash_;
};

std::vector<StepRecord> read_telemetry(const std::filesystem::path& path);

// Stable CSV column order, shared by export and its reader.
const std::vector<std::string>& csv_columns();
// Throws DataError carrying the 1-based line number of a malformed line.
void export_csv(std::istream& jsonl, std::ostream& csv);

// Checkpoint container: format tag, version, V, max_len and the logit rows in
// lexicographic context order, plus optimizer moments and the RNG cursor.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aepo
