#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "aepo/trainer.hpp"

namespace aepo {

inline constexpr int kSchemaVersion = 1;

// Experiment config document: one JSON object with sections task, loss,
// controller and trainer. Missing fields take the defaults of
// default_train_config(); unknown fields are rejected.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& doc);

TrainConfig load_config(const std::filesystem::path& path);
void save_config(const TrainConfig& cfg, const std::filesystem::path& path);

// Sets doc[a][b]... = value for a dotted path such as "trainer.steps". The
// value is parsed as JSON when possible ("50", "true", "null") and taken as a
// string otherwise.
void apply_override(nlohmann::json& doc, const std::string& dotted_path, const std::string& value);

// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const TrainConfig& cfg);

}  // namespace aepo
