#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "aepo/algorithms.hpp"
#include "aepo/config.hpp"
#include "aepo/controller.hpp"
#include "aepo/envs.hpp"
#include "aepo/error.hpp"
#include "aepo/io.hpp"
#include "aepo/oracles.hpp"
#include "aepo/policy.hpp"
#include "aepo/trainer.hpp"
#include "aepo/verify_suite.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them into dicts.
aepo::TrainConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw aepo::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return aepo::config_from_json(doc);
}

aepo::Task make_task(const std::string& kind, int vocab_size, int response_len, int num_queries, int modulus,
                     int solutions_per_query, std::uint64_t seed) {
  aepo::TaskSpec spec;
  spec.kind = aepo::task_kind_from_string(kind);
  spec.vocab = aepo::Vocab{vocab_size, std::nullopt};
  spec.response_len = response_len;
  spec.num_queries = num_queries;
  spec.modulus = modulus;
  spec.solutions_per_query = solutions_per_query;
  spec.seed = seed;
  return aepo::Task(spec);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tabular entropy-controlled policy optimization core";

  py::register_exception<aepo::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<aepo::InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<aepo::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<aepo::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<aepo::CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<aepo::ContractError>(m, "ContractError", PyExc_RuntimeError);

  m.def("probs", [](std::vector<double> l, double t) { return aepo::probs(l, aepo::Temperature(t)); },
        py::arg("logits"), py::arg("temperature") = 1.0);
  m.def("log_probs", [](std::vector<double> l, double t) { return aepo::log_probs(l, aepo::Temperature(t)); },
        py::arg("logits"), py::arg("temperature") = 1.0);
  m.def("token_entropy", [](std::vector<double> dist) { return aepo::token_entropy(dist); }, py::arg("dist"));
  m.def("grad_log_pi",
        [](std::vector<double> l, double t, int token) {
          if (token < 0) throw aepo::InvalidInput("token must be >= 0");
          return aepo::grad_log_pi(l, aepo::Temperature(t), static_cast<aepo::Token>(token));
        },
        py::arg("logits"), py::arg("temperature"), py::arg("token"));
  m.def("entropy_grad", [](std::vector<double> l) { return aepo::entropy_grad(l); }, py::arg("logits"));

  m.def("group_advantage",
        [](std::vector<double> rewards) {
          auto r = aepo::group_advantage(rewards);
          return py::make_tuple(r.advantages, r.degenerate);
        },
        py::arg("rewards"));
  m.def("clipped_weighted",
        [](double r, double w, double eps) {
          auto c = aepo::clipped_weighted(r, w, eps);
          return py::make_tuple(c.value, c.clipped);
        },
        py::arg("ratio"), py::arg("weight"), py::arg("epsilon"));
  m.def("entropy_adv_shaped", &aepo::entropy_adv_shaped, py::arg("advantage"), py::arg("token_entropy"),
        py::arg("beta"), py::arg("kappa"));
  m.def("select_temperature",
        [](double estimate, double target, double t_high, double t_low) {
          aepo::ControllerConfig cfg;
          cfg.target_entropy = target;
          cfg.t_high = t_high;
          cfg.t_low = t_low;
          return aepo::select_temperature(aepo::EntropyEstimate{estimate, 1}, cfg).value();
        },
        py::arg("estimate"), py::arg("target"), py::arg("t_high") = 1.2, py::arg("t_low") = 0.8);

  py::class_<aepo::Task>(m, "Task")
      .def(py::init(&make_task), py::arg("kind"), py::arg("vocab_size"), py::arg("response_len"),
           py::arg("num_queries") = 8, py::arg("modulus") = 0, py::arg("solutions_per_query") = 1,
           py::arg("seed") = 0)
      .def_property_readonly("num_queries", [](const aepo::Task& t) { return t.queries().size(); })
      .def("payload", [](const aepo::Task& t, std::uint32_t q) { return t.query(q).payload; })
      .def("verify",
           [](const aepo::Task& t, std::uint32_t q, std::vector<aepo::Token> response) {
             return t.verify(t.query(q), response);
           },
           py::arg("query_id"), py::arg("response"))
      .def("accepted_set", [](const aepo::Task& t, std::uint32_t q) { return t.accepted_set(t.query(q)); })
      .def("response_space_size", &aepo::Task::response_space_size);

  m.def("default_config_json", [] { return aepo::to_json(aepo::default_train_config()).dump(); });
  m.def("normalize_config_json", [](const std::string& text) { return aepo::to_json(parse_config(text)).dump(); },
        py::arg("config"));
  m.def("config_hash", [](const std::string& text) { return aepo::config_hash(parse_config(text)); },
        py::arg("config"));

  m.def("train_json",
        [](const std::string& text, std::optional<std::string> out_dir) {
          const auto cfg = parse_config(text);
          aepo::RunOptions opts;
          if (out_dir) opts.out_dir = *out_dir;
          aepo::RunResult res;
          {
            py::gil_scoped_release release;
            res = aepo::run(cfg, opts);
          }
          const aepo::Task task(cfg.task);
          const auto s = aepo::summarize(cfg, res, task);
          const auto hash = aepo::config_hash(cfg);
          json out;
          out["telemetry"] = json::array();
          for (const auto& r : res.telemetry) out["telemetry"].push_back(aepo::step_record_to_json(r, hash));
          out["summary"] = {{"config_hash", hash},
                            {"final_entropy", s.final_entropy},
                            {"final_eval_success", s.final_eval_success},
                            {"mean_abs_entropy_error", s.mean_abs_entropy_error},
                            {"mean_post_warmup_entropy", s.mean_post_warmup_entropy}};
          return out.dump();
        },
        py::arg("config"), py::arg("out_dir") = py::none());

  m.def("verify_json",
        [](bool full) {
          aepo::VerifyOptions opts;
          opts.full = full;
          std::vector<aepo::CheckResult> results;
          {
            py::gil_scoped_release release;
            results = aepo::run_verify_suite(opts);
          }
          json out = json::array();
          for (const auto& r : results) out.push_back(aepo::to_json(r));
          return out.dump();
        },
        py::arg("full") = false);

  m.def("export_csv",
        [](const std::string& jsonl) {
          std::istringstream in(jsonl);
          std::ostringstream out;
          aepo::export_csv(in, out);
          return out.str();
        },
        py::arg("jsonl"));
}
