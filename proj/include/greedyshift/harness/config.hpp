#pragma once

// Declarative run configuration (JSON). Every tuning constant is a named key;
// unknown keys are rejected so typos surface as validation errors.
//
//   {
//     "method": "iwoga+hdiwic" | "iwoga+hdiwic_s" | "oga+hdic",
//     "seed": 1,
//     "schedule": {"q": 2, "eta": 2, "M_w": 1, "M_eta": 1, "M_k": 5, "s_a": 2},
//     "scenario": {"n": 200, "p": 200, "xi": 1, ...},
//     "data": {"train_csv": "...", "test_inputs_csv": "...",
//              "importance_column": "...", "weight_columns": ["x0"]},
//     "sweep": {"n": [200, 400, 800, 1600], "p": [...], "replications": 50},
//     "evaluation": {"mc_draws": 100000},
//     "diag": {"estimator": "fitted" | "true"}
//   }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "greedyshift/error.hpp"
#include "greedyshift/evaluation.hpp"
#include "greedyshift/simulation.hpp"
#include "greedyshift/weighting.hpp"

namespace greedyshift::harness {

using json = nlohmann::json;

enum class Method { iwoga_hdiwic, iwoga_hdiwic_s, oga_hdic };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::iwoga_hdiwic: return "iwoga+hdiwic";
    case Method::iwoga_hdiwic_s: return "iwoga+hdiwic_s";
    case Method::oga_hdic: return "oga+hdic";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  if (s == "iwoga+hdiwic") return Method::iwoga_hdiwic;
  if (s == "iwoga+hdiwic_s") return Method::iwoga_hdiwic_s;
  if (s == "oga+hdic") return Method::oga_hdic;
  throw ValidationError("unknown method '" + s +
                        "' (expected iwoga+hdiwic, iwoga+hdiwic_s or oga+hdic)");
}

inline PathMode path_mode(Method m) {
  return m == Method::oga_hdic ? PathMode::oga : PathMode::iwoga;
}

struct DataSource {
  std::filesystem::path train_csv;
  std::filesystem::path test_inputs_csv;  ///< empty when absent
  std::string importance_column;          ///< precomputed w(x_t) column, optional
  std::vector<std::string> weight_columns;  ///< covariates used for weight estimation; empty = all
};

struct SweepConfig {
  std::vector<Index> n;
  std::vector<Index> p;  ///< empty means p = n in every cell
  Index replications = 50;
};

enum class DiagEstimator { fitted, true_parameters };

struct HarnessConfig {
  std::optional<Method> method;
  ScheduleConfig schedule;
  std::optional<ScenarioConfig> scenario;
  std::optional<DataSource> data;
  SweepConfig sweep;
  Index mc_draws = 100000;
  std::uint64_t seed = 1;
  DiagEstimator diag_estimator = DiagEstimator::fitted;

  /// Explicit method, else the one implied by the scenario's weight mode.
  Method resolved_method() const {
    if (method) {
      if (scenario && scenario->weight_mode == WeightMode::estimated &&
          *method == Method::iwoga_hdiwic)
        throw ValidationError(
            "method iwoga+hdiwic uses known weights but scenario.weight_mode is 'estimated'");
      return *method;
    }
    if (scenario && scenario->weight_mode == WeightMode::estimated) return Method::iwoga_hdiwic_s;
    return Method::iwoga_hdiwic;
  }
};

namespace internal {

inline void reject_unknown(const json& obj, const std::string& where,
                           std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ValidationError("config: unknown key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

inline Index read_index(const json& obj, const char* key, Index fallback, const std::string& where) {
  std::int64_t v = fallback;
  read(obj, key, v, where);
  return static_cast<Index>(v);
}

}  // namespace internal

inline ScheduleConfig parse_schedule(const json& j, double q_default) {
  internal::reject_unknown(j, "schedule", {"q", "eta", "M_w", "M_eta", "M_k", "s_a"});
  ScheduleConfig s;
  s.q = q_default;
  internal::read(j, "q", s.q, "schedule");
  internal::read(j, "eta", s.eta, "schedule");
  s.M_eta = 1.0 / s.eta + 0.5;
  internal::read(j, "M_w", s.M_w, "schedule");
  internal::read(j, "M_eta", s.M_eta, "schedule");
  internal::read(j, "M_k", s.M_k, "schedule");
  internal::read(j, "s_a", s.s_a, "schedule");
  s.validate();
  return s;
}

inline ScenarioConfig parse_scenario(const json& j) {
  internal::reject_unknown(j, "scenario",
                         {"n", "p", "xi", "shift_mean", "shift_cov", "noise_sd",
                          "misspec_amplitude", "misspec_kind", "seed", "weight_mode",
                          "q_declared", "alpha", "beta_norm", "n_test_inputs", "c_diff"});
  ScenarioConfig s;
  s.n = internal::read_index(j, "n", s.n, "scenario");
  s.p = internal::read_index(j, "p", s.p, "scenario");
  internal::read(j, "xi", s.xi, "scenario");
  internal::read(j, "shift_mean", s.shift_mean, "scenario");
  internal::read(j, "shift_cov", s.shift_cov, "scenario");
  internal::read(j, "noise_sd", s.noise_sd, "scenario");
  internal::read(j, "misspec_amplitude", s.misspec_amplitude, "scenario");
  if (j.contains("misspec_kind")) {
    std::string kind;
    internal::read(j, "misspec_kind", kind, "scenario");
    s.misspec_kind = parse_misspec(kind);
  }
  internal::read(j, "seed", s.seed, "scenario");
  if (j.contains("weight_mode")) {
    std::string mode;
    internal::read(j, "weight_mode", mode, "scenario");
    s.weight_mode = parse_weight_mode(mode);
  }
  internal::read(j, "q_declared", s.q_declared, "scenario");
  internal::read(j, "alpha", s.alpha, "scenario");
  internal::read(j, "beta_norm", s.beta_norm, "scenario");
  s.n_test_inputs = internal::read_index(j, "n_test_inputs", s.n_test_inputs, "scenario");
  if (j.contains("c_diff")) {
    double c = 0.0;
    internal::read(j, "c_diff", c, "scenario");
    s.c_diff = c;
  }
  s.validate();
  return s;
}

inline json to_json(const ScenarioConfig& s) {
  json j = {{"n", s.n},
            {"p", s.p},
            {"xi", s.xi},
            {"shift_mean", s.shift_mean},
            {"shift_cov", s.shift_cov},
            {"noise_sd", s.noise_sd},
            {"misspec_amplitude", s.misspec_amplitude},
            {"misspec_kind", to_string(s.misspec_kind)},
            {"seed", s.seed},
            {"weight_mode", to_string(s.weight_mode)},
            {"q_declared", s.q_declared},
            {"alpha", s.alpha},
            {"beta_norm", s.beta_norm},
            {"n_test_inputs", s.n_test_inputs}};
  if (s.c_diff) j["c_diff"] = *s.c_diff;
  return j;
}

inline json to_json(const ScheduleConfig& s) {
  return {{"q", s.q},     {"eta", s.eta}, {"M_w", s.M_w},
          {"M_eta", s.M_eta}, {"M_k", s.M_k}, {"s_a", s.s_a}};
}

/// Parses a configuration document. Relative data paths resolve against
/// `base_dir`.
inline HarnessConfig parse_config(const json& root, const std::filesystem::path& base_dir = {}) {
  internal::reject_unknown(root, "<root>",
                         {"method", "seed", "schedule", "scenario", "data", "sweep",
                          "evaluation", "diag"});
  HarnessConfig cfg;
  if (root.contains("method")) {
    std::string m;
    internal::read(root, "method", m, "<root>");
    cfg.method = parse_method(m);
  }
  if (root.contains("scenario")) cfg.scenario = parse_scenario(root.at("scenario"));
  internal::read(root, "seed", cfg.seed, "<root>");
  if (cfg.scenario) {
    if (root.at("scenario").contains("seed")) cfg.seed = cfg.scenario->seed;
    cfg.scenario->seed = cfg.seed;
  }

  const double q_default = cfg.scenario ? cfg.scenario->q_declared : 2.0;
  cfg.schedule = parse_schedule(root.value("schedule", json::object()), q_default);

  if (root.contains("data")) {
    const json& d = root.at("data");
    internal::reject_unknown(d, "data",
                           {"train_csv", "test_inputs_csv", "importance_column", "weight_columns"});
    DataSource src;
    std::string train;
    std::string test;
    internal::read(d, "train_csv", train, "data");
    internal::read(d, "test_inputs_csv", test, "data");
    internal::read(d, "importance_column", src.importance_column, "data");
    internal::read(d, "weight_columns", src.weight_columns, "data");
    if (train.empty()) throw ValidationError("config: data.train_csv is required");
    auto resolve = [&](const std::string& s) {
      std::filesystem::path path(s);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    src.train_csv = resolve(train);
    if (!test.empty()) src.test_inputs_csv = resolve(test);
    cfg.data = std::move(src);
  }
  if (cfg.data && cfg.scenario)
    throw ValidationError("config: give either 'scenario' or 'data', not both");

  if (root.contains("sweep")) {
    const json& s = root.at("sweep");
    internal::reject_unknown(s, "sweep", {"n", "p", "replications"});
    std::vector<std::int64_t> n;
    std::vector<std::int64_t> p;
    internal::read(s, "n", n, "sweep");
    internal::read(s, "p", p, "sweep");
    cfg.sweep.n.assign(n.begin(), n.end());
    cfg.sweep.p.assign(p.begin(), p.end());
    cfg.sweep.replications = internal::read_index(s, "replications", 50, "sweep");
  }
  if (root.contains("evaluation")) {
    const json& e = root.at("evaluation");
    internal::reject_unknown(e, "evaluation", {"mc_draws"});
    cfg.mc_draws = internal::read_index(e, "mc_draws", cfg.mc_draws, "evaluation");
    detail::require(cfg.mc_draws >= 100, "config: evaluation.mc_draws must be at least 100");
  }
  if (root.contains("diag")) {
    const json& d = root.at("diag");
    internal::reject_unknown(d, "diag", {"estimator"});
    std::string est = "fitted";
    internal::read(d, "estimator", est, "diag");
    if (est == "fitted") cfg.diag_estimator = DiagEstimator::fitted;
    else if (est == "true") cfg.diag_estimator = DiagEstimator::true_parameters;
    else throw ValidationError("config: diag.estimator must be 'fitted' or 'true'");
  }
  return cfg;
}

inline HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_config(root, path.parent_path());
}

}  // namespace greedyshift::harness
