#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aepo/config.hpp"
#include "aepo/error.hpp"
#include "aepo/io.hpp"
#include "aepo/oracles.hpp"
#include "aepo/rng.hpp"
#include "aepo/trainer.hpp"
#include "aepo/verify_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kData = 4 };

fs::path output_root() {
  const char* env = std::getenv("AEPO_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// Relative --out paths land under the output root.
fs::path resolve_out(const std::string& out, const std::string& fallback_name) {
  if (out.empty()) return output_root() / fallback_name;
  fs::path p(out);
  return p.is_absolute() ? p : output_root() / p;
}

struct ConfigFlags {
  std::string config;
  std::string algorithm;
  int steps = -1;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--algorithm", f.algorithm, "Override loss.variant");
  cmd->add_option("--steps", f.steps, "Override trainer.steps");
  cmd->add_option("--set", f.sets, "Override a field by dotted path, e.g. loss.alpha=0.5")->allow_extra_args(false);
}

json load_doc(const ConfigFlags& f) {
  json doc;
  if (f.config.empty()) {
    doc = aepo::to_json(aepo::default_train_config());
  } else {
    std::ifstream in(f.config);
    if (!in) throw aepo::ConfigError("cannot read config file '" + f.config + "'");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw aepo::ConfigError("config file '" + f.config + "' is not valid JSON: " + e.what());
    }
  }
  if (!f.algorithm.empty()) aepo::apply_override(doc, "loss.variant", f.algorithm);
  if (f.steps >= 0) aepo::apply_override(doc, "trainer.steps", std::to_string(f.steps));
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw aepo::ConfigError("--set expects key=value, got '" + s + "'");
    aepo::apply_override(doc, s.substr(0, eq), s.substr(eq + 1));
  }
  return doc;
}

ordered_json summary_json(const aepo::TrainConfig& cfg, const aepo::RunResult& res, double seconds) {
  const aepo::Task task(cfg.task);
  const auto s = aepo::summarize(cfg, res, task);
  ordered_json j;
  j["schema_version"] = aepo::kSchemaVersion;
  j["config_hash"] = aepo::config_hash(cfg);
  j["variant"] = aepo::to_string(cfg.loss.variant);
  j["seed"] = cfg.seed;
  j["steps"] = res.final_checkpoint.step;
  j["target_entropy"] = cfg.controller.target_entropy;
  j["final_entropy"] = s.final_entropy;
  j["final_eval_success"] = s.final_eval_success;
  j["mean_abs_entropy_error"] = s.mean_abs_entropy_error;
  j["mean_post_warmup_entropy"] = s.mean_post_warmup_entropy;
  j["wall_clock_seconds"] = seconds;
  return j;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

// Runs one training job into out_dir and returns its summary.
ordered_json train_into(const aepo::TrainConfig& cfg, const fs::path& out_dir, const std::string& resume_path) {
  fs::create_directories(out_dir);
  aepo::save_config(cfg, out_dir / "config.json");
  aepo::RunOptions opts;
  opts.out_dir = out_dir;
  const auto t0 = std::chrono::steady_clock::now();
  aepo::RunResult res;
  if (resume_path.empty()) {
    res = aepo::run(cfg, opts);
  } else {
    res = aepo::resume(cfg, aepo::load_checkpoint(resume_path), opts);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto summary = summary_json(cfg, res, seconds);
  write_json(out_dir / "summary.json", summary);
  return summary;
}

// Maps library exceptions onto the documented exit codes.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const aepo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const aepo::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const aepo::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const aepo::DataError& e) {
    std::cerr << "data error";
    if (e.line() > 0) std::cerr << " at line " << e.line();
    std::cerr << ": " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw aepo::ConfigError("not a number in list: '" + item + "'");
    }
  }
  if (out.empty()) throw aepo::ConfigError("empty value list '" + text + "'");
  return out;
}

struct GridAxis {
  std::string key;  // dotted path, or empty for target fractions
  std::vector<std::string> values;
};

GridAxis parse_grid(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw aepo::ConfigError("--grid expects key=v1,v2,..., got '" + spec + "'");
  GridAxis axis{spec.substr(0, eq), {}};
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) axis.values.push_back(item);
  }
  if (axis.values.empty()) throw aepo::ConfigError("--grid '" + spec + "' has no values");
  return axis;
}

std::string fixed(double x, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

int cmd_train(const ConfigFlags& f, const std::string& out, const std::string& resume_path) {
  const json doc = load_doc(f);
  const auto cfg = aepo::config_from_json(doc);
  const fs::path dir = resolve_out(out, "train-" + aepo::config_hash(cfg));
  const auto summary = train_into(cfg, dir, resume_path);
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_sweep(const ConfigFlags& f, const std::string& out, const std::string& fractions,
              const std::vector<std::string>& grids) {
  const json base = load_doc(f);
  const auto base_cfg = aepo::config_from_json(base);
  std::vector<GridAxis> axes;
  if (!fractions.empty()) {
    GridAxis axis{"", {}};
    for (double x : parse_list(fractions)) axis.values.push_back(fixed(x, 6));
    axes.push_back(axis);
  }
  for (const auto& g : grids) axes.push_back(parse_grid(g));
  if (axes.empty()) throw aepo::ConfigError("sweep needs --target-fractions or at least one --grid");

  std::size_t points = 1;
  for (const auto& a : axes) points *= a.values.size();
  const fs::path dir = resolve_out(out, "sweep-" + aepo::config_hash(base_cfg));
  fs::create_directories(dir);

  const double log_v = std::log(static_cast<double>(base_cfg.task.vocab.size));
  ordered_json rows = ordered_json::array();
  int first_failure = kOk;
  for (std::size_t p = 0; p < points; ++p) {
    ordered_json row;
    row["point"] = p;
    std::size_t rem = p;
    json doc = base;
    int code = kOk;
    std::string error;
    // Row-major over the axes, last axis fastest.
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      idx[a] = rem % axes[a].values.size();
      rem /= axes[a].values.size();
    }
    code = guarded([&] {
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto& value = axes[a].values[idx[a]];
        if (axes[a].key.empty()) {
          row["target_fraction"] = std::stod(value);
          row["target_entropy"] = std::stod(value) * log_v;
          aepo::apply_override(doc, "controller.target_entropy", fixed(std::stod(value) * log_v, 17));
        } else {
          row[axes[a].key] = value;
          aepo::apply_override(doc, axes[a].key, value);
        }
      }
      // Derived per-point seed: each grid point is an independent replicate.
      const std::uint64_t seed = aepo::splitmix64(base_cfg.seed ^ (0x9e3779b97f4a7c15ULL * (p + 1)));
      doc["trainer"]["seed"] = seed;
      const auto cfg = aepo::config_from_json(doc);
      char name[32];
      std::snprintf(name, sizeof(name), "point_%03zu", p);
      const auto summary = train_into(cfg, dir / name, "");
      row["seed"] = seed;
      row["target_entropy"] = cfg.controller.target_entropy;
      row["mean_post_warmup_entropy"] = summary["mean_post_warmup_entropy"];
      row["final_entropy"] = summary["final_entropy"];
      row["final_eval_success"] = summary["final_eval_success"];
      return kOk;
    });
    row["status"] = code == kOk ? "ok" : "failed";
    if (code != kOk) {
      row["exit_code"] = code;
      if (first_failure == kOk) first_failure = code;
    }
    rows.push_back(row);
  }

  ordered_json table;
  table["schema_version"] = aepo::kSchemaVersion;
  table["config_hash"] = aepo::config_hash(base_cfg);
  table["rows"] = rows;
  write_json(dir / "sweep_summary.json", table);

  std::ofstream csv(dir / "sweep_summary.csv");
  csv << "point,target_entropy,mean_post_warmup_entropy,final_entropy,final_eval_success,status\n";
  std::cout << std::left << std::setw(7) << "point" << std::setw(16) << "target_entropy" << std::setw(16)
            << "mean_entropy" << std::setw(16) << "final_entropy" << std::setw(16) << "final_success"
            << "status\n";
  auto num = [](const ordered_json& r, const char* k) { return r.contains(k) ? r[k].dump() : std::string(); };
  for (const auto& r : rows) {
    csv << r["point"].dump() << ',' << num(r, "target_entropy") << ',' << num(r, "mean_post_warmup_entropy") << ','
        << num(r, "final_entropy") << ',' << num(r, "final_eval_success") << ','
        << r["status"].get<std::string>() << '\n';
    auto show = [&](const char* k) { return r.contains(k) ? fixed(r[k].get<double>(), 4) : std::string("-"); };
    std::cout << std::left << std::setw(7) << r["point"].dump() << std::setw(16) << show("target_entropy")
              << std::setw(16) << show("mean_post_warmup_entropy") << std::setw(16) << show("final_entropy")
              << std::setw(16) << show("final_eval_success") << r["status"].get<std::string>() << '\n';
  }
  return first_failure;
}

int cmd_verify(bool full, const std::string& fault, std::uint64_t seed) {
  aepo::VerifyOptions opts;
  opts.full = full;
  opts.seed = seed;
  if (fault == "grad-sign") {
    opts.grad_log_pi = [](std::span<const double> l, aepo::Temperature t, aepo::Token a) {
      auto g = aepo::grad_log_pi(l, t, a);
      for (double& x : g) x = -x;
      return g;
    };
  } else if (!fault.empty()) {
    throw aepo::ConfigError("unknown fault '" + fault + "' (known: grad-sign)");
  }
  std::vector<std::string> failed;
  for (const auto& r : aepo::run_verify_suite(opts)) {
    std::cout << aepo::to_json(r).dump() << std::endl;
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) return kOk;
  std::cerr << failed.size() << " check(s) failed:";
  for (const auto& n : failed) std::cerr << ' ' << n;
  std::cerr << '\n';
  return kFailure;
}

int cmd_eval(const ConfigFlags& f, const std::string& checkpoint, int mc_samples) {
  const auto cfg = aepo::config_from_json(load_doc(f));
  const auto ckpt = aepo::load_checkpoint(checkpoint);
  const aepo::Task task(cfg.task);
  if (ckpt.policy.vocab_size() != task.vocab().size || ckpt.policy.max_len() != task.response_len()) {
    throw aepo::ConfigError("checkpoint policy shape does not match the config's task");
  }
  const auto res = aepo::evaluate(ckpt.policy, task, mc_samples, cfg.seed);
  ordered_json j;
  j["schema_version"] = aepo::kSchemaVersion;
  j["config_hash"] = aepo::config_hash(cfg);
  j["checkpoint_step"] = ckpt.step;
  j["success"] = res.success;
  j["exact"] = res.exact;
  if (!res.exact) j["ci_half_width"] = res.ci_half_width;
  if (task.enumerable()) j["exact_entropy"] = aepo::exact_entropy(ckpt.policy, task);
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_export(const std::string& telemetry, const std::string& format, const std::string& out) {
  if (format != "csv") throw aepo::ConfigError("unsupported export format '" + format + "'");
  std::ifstream in(telemetry);
  if (!in) throw aepo::DataError("cannot read telemetry file '" + telemetry + "'", 0);
  if (out.empty() || out == "-") {
    aepo::export_csv(in, std::cout);
    return kOk;
  }
  // Write to a temporary first so a malformed input leaves no partial CSV.
  const fs::path target(out);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream csv(tmp);
    try {
      aepo::export_csv(in, csv);
    } catch (...) {
      csv.close();
      fs::remove(tmp);
      throw;
    }
  }
  fs::rename(tmp, target);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-entropy policy optimization lab"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  std::string train_out, resume_path;
  auto* train = app.add_subcommand("train", "Run one training job");
  add_config_flags(train, train_flags, true);
  train->add_option("--out", train_out, "Output directory (relative paths go under $AEPO_OUTPUT_ROOT)");
  train->add_option("--resume", resume_path, "Continue from a checkpoint written under the same config");

  ConfigFlags sweep_flags;
  std::string sweep_out, fractions;
  std::vector<std::string> grids;
  auto* sweep = app.add_subcommand("sweep", "Run one job per grid point and tabulate the results");
  add_config_flags(sweep, sweep_flags, true);
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->add_option("--target-fractions", fractions, "Target entropies as fractions of log V, e.g. 0.25,0.5,0.75");
  sweep->add_option("--grid", grids, "Grid axis key=v1,v2,... (repeatable; axes combine as a product)");

  bool full = false;
  std::string fault;
  std::uint64_t verify_seed = 7;
  auto* verify = app.add_subcommand("verify", "Run the oracle suite; one JSON line per check");
  verify->add_flag("--full", full, "Full sample counts");
  verify->add_option("--inject-fault", fault, "Deliberately break a component (grad-sign)");
  verify->add_option("--seed", verify_seed, "Seed for the suite's random cases");

  ConfigFlags eval_flags;
  std::string checkpoint;
  int mc_samples = 2000;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's success rate");
  add_config_flags(eval, eval_flags, false);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--mc-samples", mc_samples, "Monte Carlo draws per query when enumeration is too large");

  std::string telemetry, format = "csv", export_out;
  auto* exp = app.add_subcommand("export", "Convert telemetry JSONL for plotting");
  exp->add_option("--telemetry", telemetry, "telemetry.jsonl")->required();
  exp->add_option("--format", format, "Output format (csv)");
  exp->add_option("--out", export_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*train) return guarded([&] { return cmd_train(train_flags, train_out, resume_path); });
  if (*sweep) return guarded([&] { return cmd_sweep(sweep_flags, sweep_out, fractions, grids); });
  if (*verify) return guarded([&] { return cmd_verify(full, fault, verify_seed); });
  if (*eval) return guarded([&] { return cmd_eval(eval_flags, checkpoint, mc_samples); });
  if (*exp) return guarded([&] { return cmd_export(telemetry, format, export_out); });
  return kFailure;
}
