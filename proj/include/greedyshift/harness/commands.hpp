#pragma once

// CLI commands: fit, rate-sweep, weights-diag, simulate. Each reads a config
// file, writes its outputs into an output directory and returns an exit code
// (0 success, 2 validation error, 3 numerical failure).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "greedyshift/harness/config.hpp"
#include "greedyshift/harness/csv_io.hpp"
#include "greedyshift/harness/diagnostics.hpp"
#include "greedyshift/harness/pipeline.hpp"

namespace greedyshift::harness {

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3 };

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::filesystem::path out = ".";
  int threads = 0;  ///< 0: GREEDYSHIFT_THREADS, else 1
};

namespace internal {

inline HarnessConfig load_with_overrides(const CommandOptions& opt) {
  HarnessConfig cfg = load_config(opt.config);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    if (cfg.scenario) cfg.scenario->seed = *opt.seed;
  }
  if (opt.method) cfg.method = parse_method(*opt.method);
  return cfg;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

inline void write_trace(const std::filesystem::path& path, const PipelineResult& r) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "k,sigma2,criterion\n";
  for (std::size_t k = 0; k < r.path.sigma2_trace.size(); ++k)
    out << (k + 1) << ',' << format_double(r.path.sigma2_trace[k]) << ','
        << format_double(r.trace.values[k]) << '\n';
}

inline IndexSet column_indices(const std::vector<std::string>& wanted,
                               const std::vector<std::string>& names) {
  IndexSet out;
  for (const auto& w : wanted) {
    const auto it = std::find(names.begin(), names.end(), w);
    if (it == names.end()) throw ValidationError("weight column '" + w + "' is not a covariate");
    out.push_back(static_cast<Index>(it - names.begin()));
  }
  return out;
}

inline json fit_csv(const HarnessConfig& cfg, Method method, PipelineResult& result,
                    std::vector<std::string>& names) {
  const DataSource& src = *cfg.data;
  const Table table = read_table(src.train_csv);
  TrainingTable train = training_from_table(table, src.train_csv.string(), src.importance_column);
  const Dataset& data = train.data;
  names = data.feature_names();
  const Schedule sched = resolve_schedule(data.n(), data.p(), cfg.schedule, path_mode(method));
  std::optional<WeightVector> w;
  switch (method) {
    case Method::iwoga_hdiwic:
      if (!train.importance)
        throw ValidationError(
            "method iwoga+hdiwic on CSV input needs data.importance_column (known importance)");
      w = build_weights(ImportanceModel::precomputed(*train.importance), data.x(), sched.b_n);
      break;
    case Method::iwoga_hdiwic_s: {
      if (src.test_inputs_csv.empty())
        throw ValidationError("method iwoga+hdiwic_s needs data.test_inputs_csv");
      const Table test = read_table(src.test_inputs_csv);
      const Matrix x_te = inputs_from_table(test, names, src.test_inputs_csv.string());
      const IndexSet coords = column_indices(src.weight_columns, names);
      w = build_weights(fit_gaussian_importance(data.x(), x_te, coords), data.x(), sched.b_n);
      break;
    }
    case Method::oga_hdic: break;
  }
  result = run_pipeline(data, w ? *w : WeightVector::uniform(data.n()), cfg.schedule, method);
  json source = {{"type", "csv"},
                 {"train_csv", src.train_csv.string()},
                 {"n", data.n()},
                 {"p", data.p()}};
  if (!src.test_inputs_csv.empty()) source["test_inputs_csv"] = src.test_inputs_csv.string();
  if (!src.importance_column.empty()) source["importance_column"] = src.importance_column;
  return source;
}

}  // namespace internal

inline void cmd_fit(const CommandOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const HarnessConfig cfg = internal::load_with_overrides(opt);
  const Method method = cfg.resolved_method();
  std::filesystem::create_directories(opt.out);

  PipelineResult result;
  json source;
  std::optional<double> mcpe;
  std::optional<double> cpe;
  std::vector<std::string> names;
  if (cfg.data) {
    source = internal::fit_csv(cfg, method, result, names);
  } else if (cfg.scenario) {
    const Population pop = make_population(*cfg.scenario);
    const SimulatedRun run =
        run_simulated(pop, *cfg.scenario, cfg.schedule, method, cfg.seed, cfg.mc_draws);
    result = run.pipeline;
    mcpe = run.mcpe;
    cpe = run.cpe;
    source = {{"type", "simulated"}, {"scenario", to_json(*cfg.scenario)}};
  } else {
    throw ValidationError("config needs a 'scenario' or a 'data' section");
  }
  const json rec = run_record(source, cfg.schedule, result, mcpe, cpe, cfg.seed,
                              internal::elapsed_ms(start), names);
  internal::write_json(opt.out / "run.json", rec);
  internal::write_trace(opt.out / "trace.csv", result);
  log << "method " << to_string(method) << ": selected k = " << result.trace.selected_k << " of "
      << result.path.size();
  if (mcpe) log << ", mcpe = " << *mcpe << ", cpe = " << *cpe;
  log << '\n';
}

inline json to_json(const RateSweepResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"n", c.n},
                     {"p", c.p},
                     {"rate", c.rate},
                     {"K_n", c.K_n},
                     {"mean_error", c.mean_error},
                     {"std_error", c.std_error},
                     {"mean_selected_k", c.mean_selected_k},
                     {"failures", c.failures}});
  json j = {{"method", to_string(r.method)},
            {"error_metric", r.method == Method::oga_hdic ? "cpe" : "mcpe"},
            {"rate", r.method == Method::oga_hdic ? "c_n" : "d_n"},
            {"xi", r.xi},
            {"replications", r.replications},
            {"cells", cells},
            {"theoretical_exponent", r.theoretical_exponent}};
  if (r.method == Method::oga_hdic) j["slow_exponent"] = r.slow_exponent;
  if (r.slope) {
    j["slope"] = *r.slope;
    j["slope_se"] = *r.slope_se;
    j["intercept"] = *r.intercept;
  } else {
    j["slope"] = nullptr;
    j["slope_skipped"] = r.slope_skipped;
  }
  return j;
}

inline void write_sweep_csv(const std::filesystem::path& dir, const RateSweepResult& r) {
  const bool oga = r.method == Method::oga_hdic;
  {
    std::ofstream out(dir / "sweep.csv");
    if (!out) throw ValidationError("cannot write " + (dir / "sweep.csv").string());
    out << (oga ? "n,p,c_n,mean_cpe,se\n" : "n,p,d_n,mean_mcpe,se\n");
    for (const auto& c : r.cells)
      out << c.n << ',' << c.p << ',' << format_double(c.rate) << ',' << format_double(c.mean_error)
          << ',' << format_double(c.std_error) << '\n';
  }
  std::ofstream out(dir / "replications.csv");
  if (!out) throw ValidationError("cannot write " + (dir / "replications.csv").string());
  out << "n,p,replication,seed,ok,selected_k," << (oga ? "cpe" : "mcpe") << '\n';
  for (const auto& row : r.rows) {
    const auto& c = r.cells[static_cast<std::size_t>(row.cell)];
    out << c.n << ',' << c.p << ',' << row.replication << ',' << row.seed << ',' << (row.ok ? 1 : 0)
        << ',' << row.selected_k << ',' << (row.ok ? format_double(row.error) : "") << '\n';
  }
}

inline void cmd_rate_sweep(const CommandOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const HarnessConfig cfg = internal::load_with_overrides(opt);
  if (!cfg.scenario) throw ValidationError("rate-sweep needs a 'scenario' section");
  if (cfg.sweep.n.empty()) throw ValidationError("rate-sweep needs a 'sweep' section with n values");
  const Method method = cfg.resolved_method();
  std::filesystem::create_directories(opt.out);
  const RateSweepResult r = rate_sweep(*cfg.scenario, cfg.schedule, cfg.sweep, method, cfg.seed,
                                       resolve_threads(opt.threads), cfg.mc_draws);
  write_sweep_csv(opt.out, r);
  json j = to_json(r);
  j["scenario"] = to_json(*cfg.scenario);
  j["schedule"] = to_json(cfg.schedule);
  j["seed"] = cfg.seed;
  j["library_version"] = kLibraryVersion;
  j["wall_time_ms"] = internal::elapsed_ms(start);
  internal::write_json(opt.out / "sweep.json", j);
  log << "method " << to_string(method) << ": ";
  if (r.slope)
    log << "slope " << *r.slope << " +/- " << *r.slope_se << " (theory "
        << r.theoretical_exponent << ")\n";
  else
    log << "slope skipped: " << r.slope_skipped << '\n';
}

inline void cmd_weights_diag(const CommandOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const HarnessConfig cfg = internal::load_with_overrides(opt);
  if (!cfg.scenario)
    throw ValidationError("weights-diag needs a simulated 'scenario' (true weights must be known)");
  std::filesystem::create_directories(opt.out);
  const Population pop = make_population(*cfg.scenario);
  const SimulatedDraw draw =
      draw_dataset(pop, cfg.scenario->n, cfg.seed, cfg.scenario->test_inputs());
  const ImportanceModel estimate =
      cfg.diag_estimator == DiagEstimator::true_parameters
          ? true_importance(pop)
          : fit_gaussian_importance(draw.data.x(), draw.test_inputs, pop.shift_coords);
  const WeightsDiagnostics d = weights_diagnostics(pop, draw, estimate, cfg.schedule);
  json j = to_json(d);
  j["estimator"] = cfg.diag_estimator == DiagEstimator::true_parameters ? "true" : "fitted";
  j["scenario"] = to_json(*cfg.scenario);
  j["schedule"] = to_json(cfg.schedule);
  j["seed"] = cfg.seed;
  j["library_version"] = kLibraryVersion;
  j["wall_time_ms"] = internal::elapsed_ms(start);
  internal::write_json(opt.out / "weights_diag.json", j);
  log << "max |what - w| = " << d.max_weight_deviation
      << ", cross moment / d_n = " << d.cross_moment_scaled()
      << ", noise cross / d_n = " << d.noise_cross_scaled() << '\n';
}

inline void cmd_simulate(const CommandOptions& opt, std::ostream& log) {
  const HarnessConfig cfg = internal::load_with_overrides(opt);
  if (!cfg.scenario) throw ValidationError("simulate needs a 'scenario' section");
  std::filesystem::create_directories(opt.out);
  const Population pop = make_population(*cfg.scenario);
  const SimulatedDraw draw =
      draw_dataset(pop, cfg.scenario->n, cfg.seed, cfg.scenario->test_inputs());
  const auto names = default_feature_names(pop.p());
  write_matrix_csv(opt.out / "train.csv", names, draw.data.x(), &draw.data.y());
  write_matrix_csv(opt.out / "test_inputs.csv", names, draw.test_inputs);
  const LinearTarget blp = best_linear_predictor(pop);
  json j = {{"scenario", to_json(*cfg.scenario)},
            {"alpha", pop.alpha},
            {"beta", std::vector<double>(pop.beta.data(), pop.beta.data() + pop.p())},
            {"mu_te", std::vector<double>(pop.mu_te.data(), pop.mu_te.data() + pop.p())},
            {"test_blp_alpha", blp.alpha},
            {"test_blp_beta", std::vector<double>(blp.beta.data(), blp.beta.data() + pop.p())},
            {"lambda_floor", pop.lambda_floor},
            {"seed", cfg.seed},
            {"library_version", kLibraryVersion}};
  internal::write_json(opt.out / "population.json", j);
  log << "wrote " << draw.data.n() << " training rows and " << draw.test_inputs.rows()
      << " test inputs to " << opt.out.string() << '\n';
}

/// Runs a command by name and maps exceptions to exit codes.
inline int run_command(const std::string& name, const CommandOptions& opt, std::ostream& log,
                       std::ostream& err) {
  try {
    if (name == "fit") cmd_fit(opt, log);
    else if (name == "rate-sweep") cmd_rate_sweep(opt, log);
    else if (name == "weights-diag") cmd_weights_diag(opt, log);
    else if (name == "simulate") cmd_simulate(opt, log);
    else throw ValidationError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace greedyshift::harness
