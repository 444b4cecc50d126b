#pragma once

// Fit/select pipelines, replication sweeps and weight diagnostics. These are
// the library side of the CLI commands; they return values and leave all
// file output to commands.hpp.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "greedyshift/criteria.hpp"
#include "greedyshift/evaluation.hpp"
#include "greedyshift/greedy_path.hpp"
#include "greedyshift/harness/config.hpp"
#include "greedyshift/model_core.hpp"
#include "greedyshift/parallel.hpp"
#include "greedyshift/random.hpp"
#include "greedyshift/simulation.hpp"
#include "greedyshift/version.hpp"
#include "greedyshift/weighting.hpp"

namespace greedyshift::harness {

struct PipelineResult {
  Method method = Method::iwoga_hdiwic;
  Schedule schedule;
  GreedyPath path;
  CriterionTrace trace;
  FitResult selected;
};

/// Path, criterion and selected fit for already-built weights. The
/// unweighted method ignores `weights`.
inline PipelineResult run_pipeline(const Dataset& data, const WeightVector& weights,
                                   const ScheduleConfig& cfg, Method method) {
  PipelineResult r;
  r.method = method;
  r.schedule = resolve_schedule(data.n(), data.p(), cfg, path_mode(method));
  const bool unweighted = method == Method::oga_hdic;
  const WeightVector unit = WeightVector::uniform(data.n());
  r.path = build_path(data, unweighted ? unit : weights, r.schedule.K_n);
  if (r.path.empty())
    throw NumericalError("greedy path is empty: " + r.path.truncation_detail);
  const double rate = unweighted ? r.schedule.c_n : r.schedule.d_n;
  r.trace = select_k(r.path, rate * rate, cfg.s_a);
  r.selected = r.path.fits[static_cast<std::size_t>(r.trace.selected_k - 1)];
  return r;
}

/// Importance model used by a method on simulated data.
inline std::optional<ImportanceModel> simulated_importance(const Population& pop,
                                                           const SimulatedDraw& draw,
                                                           Method method) {
  switch (method) {
    case Method::iwoga_hdiwic: return true_importance(pop);
    case Method::iwoga_hdiwic_s:
      return fit_gaussian_importance(draw.data.x(), draw.test_inputs, pop.shift_coords);
    case Method::oga_hdic: return std::nullopt;
  }
  return std::nullopt;
}

struct SimulatedRun {
  PipelineResult pipeline;
  double mcpe = 0.0;  ///< against the test-domain best linear predictor
  double cpe = 0.0;   ///< against the regression function
  double cpe_se = 0.0;  ///< Monte Carlo standard error (0 when exact)
};

/// One replication on a simulated population.
inline SimulatedRun run_simulated(const Population& pop, const ScenarioConfig& scenario,
                                  const ScheduleConfig& cfg, Method method, std::uint64_t seed,
                                  Index mc_draws = 100000) {
  const Index n_test = method == Method::iwoga_hdiwic_s ? scenario.test_inputs() : 0;
  const SimulatedDraw draw = draw_dataset(pop, scenario.n, seed, n_test);
  const Schedule sched = resolve_schedule(scenario.n, scenario.p, cfg, path_mode(method));
  const auto importance = simulated_importance(pop, draw, method);
  const WeightVector w = importance ? build_weights(*importance, draw.data.x(), sched.b_n)
                                    : WeightVector::uniform(scenario.n);
  SimulatedRun run;
  run.pipeline = run_pipeline(draw.data, w, cfg, method);
  run.mcpe = mcpe_analytic(pop, run.pipeline.selected);
  if (pop.misspecified()) {
    const auto mc = cpe_monte_carlo(pop, run.pipeline.selected, mc_draws, derive_seed(seed, {3}));
    run.cpe = mc.estimate;
    run.cpe_se = mc.std_error;
  } else {
    run.cpe = cpe_analytic(pop, run.pipeline.selected);
  }
  return run;
}

inline json schedule_json(const ScheduleConfig& cfg, const Schedule& s) {
  json j = to_json(cfg);
  j["c_n"] = s.c_n;
  j["d_n"] = s.d_n;
  j["b_n"] = s.b_n;
  j["K_n"] = s.K_n;
  return j;
}

inline json fit_json(const FitResult& fit, const std::vector<std::string>& names) {
  json model = json::array();
  json labels = json::array();
  for (Index j : fit.model) {
    model.push_back(j);
    if (!names.empty()) labels.push_back(names[static_cast<std::size_t>(j)]);
  }
  std::vector<double> beta(fit.beta.data(), fit.beta.data() + fit.beta.size());
  json out = {{"model", model}, {"alpha", fit.alpha}, {"beta", beta}, {"weighted", fit.weighted}};
  if (!names.empty()) out["features"] = labels;
  if (fit.sigma2) out["sigma2"] = *fit.sigma2;
  return out;
}

/// Machine-readable record of one fit. `wall_time_ms` is the only field
/// that may differ between identical runs.
inline json run_record(const json& source, const ScheduleConfig& cfg, const PipelineResult& r,
                       std::optional<double> mcpe, std::optional<double> cpe,
                       std::uint64_t seed, std::int64_t wall_time_ms,
                       const std::vector<std::string>& names = {}) {
  json rec;
  rec["source"] = source;
  rec["schedule"] = schedule_json(cfg, r.schedule);
  rec["method"] = to_string(r.method);
  rec["selected_k"] = r.trace.selected_k;
  rec["mcpe"] = mcpe ? json(*mcpe) : json(nullptr);
  rec["cpe"] = cpe ? json(*cpe) : json(nullptr);
  rec["sigma2_trace"] = r.path.sigma2_trace;
  rec["criterion_trace"] = r.trace.values;
  rec["path_order"] = r.path.empty() ? json::array() : json(r.path.order());
  rec["truncation"] = {{"reason", to_string(r.path.truncation)},
                       {"detail", r.path.truncation_detail}};
  rec["selected_fit"] = fit_json(r.selected, names);
  rec["seed"] = seed;
  rec["library_version"] = kLibraryVersion;
  rec["wall_time_ms"] = wall_time_ms;
  return rec;
}

// ---------------------------------------------------------------------------
// Rate sweeps

struct SweepCell {
  Index n = 0;
  Index p = 0;
  double rate = 0.0;  ///< d_n for weighted methods, c_n for OGA
  Index K_n = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  double mean_selected_k = 0.0;
  Index failures = 0;
};

struct ReplicationRow {
  Index cell = 0;
  Index replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  Index selected_k = 0;
  double error = 0.0;
  std::string failure;
};

struct RateSweepResult {
  Method method = Method::iwoga_hdiwic;
  double xi = 0.0;
  Index replications = 0;
  std::vector<SweepCell> cells;
  std::vector<ReplicationRow> rows;
  std::optional<double> slope;
  std::optional<double> slope_se;
  std::optional<double> intercept;
  std::string slope_skipped;        ///< reason when the slope was not fitted
  double theoretical_exponent = 0;  ///< (1+2 xi)/(1+xi)
  double slow_exponent = 0;         ///< 2 xi/(1+xi)
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y = a + b x with the usual slope standard error.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size() && x.size() >= 3, "line fit needs at least 3 points");
  const double m = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "line fit needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - f.intercept - f.slope * x[i];
    rss += e * e;
  }
  f.slope_se = std::sqrt(rss / (m - 2.0) / sxx);
  return f;
}

/// Noise levels below this make the error pure bias; the slope is not fitted.
inline constexpr double kDegenerateNoise = 1e-6;

inline RateSweepResult rate_sweep(const ScenarioConfig& base, const ScheduleConfig& cfg,
                                  const SweepConfig& sweep, Method method, std::uint64_t seed,
                                  unsigned threads, Index mc_draws = 100000) {
  std::set<Index> distinct(sweep.n.begin(), sweep.n.end());
  detail::require(distinct.size() >= 4, "rate sweep needs at least 4 distinct n values");
  detail::require(sweep.replications >= 20, "rate sweep needs at least 20 replications");
  detail::require(sweep.p.empty() || sweep.p.size() == sweep.n.size(),
                  "sweep.p must be empty or match sweep.n in length");

  const std::size_t n_cells = sweep.n.size();
  const auto reps = static_cast<std::size_t>(sweep.replications);
  std::vector<ScenarioConfig> scenarios(n_cells, base);
  for (std::size_t c = 0; c < n_cells; ++c) {
    scenarios[c].n = sweep.n[c];
    scenarios[c].p = sweep.p.empty() ? sweep.n[c] : sweep.p[c];
    scenarios[c].validate();
  }
  std::vector<std::optional<Population>> pops(n_cells);
  parallel_for(n_cells, threads, [&](std::size_t c) { pops[c] = make_population(scenarios[c]); });

  RateSweepResult out;
  out.method = method;
  out.xi = base.xi;
  out.replications = sweep.replications;
  out.theoretical_exponent = (1.0 + 2.0 * base.xi) / (1.0 + base.xi);
  out.slow_exponent = 2.0 * base.xi / (1.0 + base.xi);
  out.rows.resize(n_cells * reps);
  const bool oga = method == Method::oga_hdic;

  parallel_for(n_cells * reps, threads, [&](std::size_t task) {
    const std::size_t c = task / reps;
    const std::size_t r = task % reps;
    ReplicationRow& row = out.rows[task];
    row.cell = static_cast<Index>(c);
    row.replication = static_cast<Index>(r);
    row.seed = derive_seed(seed, {c, r});
    try {
      const SimulatedRun run = run_simulated(*pops[c], scenarios[c], cfg, method, row.seed, mc_draws);
      row.ok = true;
      row.selected_k = run.pipeline.trace.selected_k;
      row.error = oga ? run.cpe : run.mcpe;
    } catch (const NumericalError& e) {
      row.failure = e.what();
    }
  });

  std::vector<double> log_rate;
  std::vector<double> log_err;
  for (std::size_t c = 0; c < n_cells; ++c) {
    SweepCell cell;
    cell.n = scenarios[c].n;
    cell.p = scenarios[c].p;
    const Schedule s = resolve_schedule(cell.n, cell.p, cfg, path_mode(method));
    cell.rate = oga ? s.c_n : s.d_n;
    cell.K_n = s.K_n;
    double sum = 0, sum_sq = 0, sum_k = 0;
    Index ok = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& row = out.rows[c * reps + r];
      if (!row.ok) {
        ++cell.failures;
        continue;
      }
      ++ok;
      sum += row.error;
      sum_sq += row.error * row.error;
      sum_k += static_cast<double>(row.selected_k);
    }
    if (ok == 0)
      throw NumericalError("rate sweep: every replication failed in cell " + std::to_string(c) +
                           " (n=" + std::to_string(cell.n) + ", p=" + std::to_string(cell.p) + ")");
    const double k = static_cast<double>(ok);
    cell.mean_error = sum / k;
    cell.mean_selected_k = sum_k / k;
    const double var = ok > 1 ? std::max(0.0, (sum_sq - k * cell.mean_error * cell.mean_error) / (k - 1)) : 0.0;
    cell.std_error = std::sqrt(var / k);
    out.cells.push_back(cell);
    log_rate.push_back(std::log(cell.rate));
    log_err.push_back(std::log(cell.mean_error));
  }

  if (base.noise_sd < kDegenerateNoise) {
    out.slope_skipped = "noise_sd below 1e-6: error is dominated by approximation bias";
  } else {
    const LineFit f = fit_line(log_rate, log_err);
    out.slope = f.slope;
    out.slope_se = f.slope_se;
    out.intercept = f.intercept;
  }
  return out;
}

}  // namespace greedyshift::harness
