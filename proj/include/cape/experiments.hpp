#pragma once

// Seeded simulation sweeps: method comparison at fixed n, success-rate
// curves over n, convergence traces across n, error scaling against the
// Gaussian width, and Monte Carlo probes of quadratic-form concentration.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cape/solvers.hpp"
#include "cape/synth.hpp"

namespace cape {

enum class ExperimentKind { Table1, Phase, Tradeoff, Scaling, Probe };
enum class Method { AltIHT, AltPgdL1, Pgd };
/// Which block's absolute error a scaling scenario tracks.
enum class ScalingFocus { None, Gamma, Omega };

std::string to_string(ExperimentKind kind);
std::string to_string(Method method);
std::string to_string(ScalingFocus focus);
ExperimentKind parse_experiment_kind(const std::string& text);
Method parse_method(const std::string& text);
ScalingFocus parse_scaling_focus(const std::string& text);

struct Scenario {
  std::string label;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t s_gamma = 0;
  CovarianceDesign sigma;
  CovarianceDesign omega;
  /// Replaces ExperimentSpec::n_grid for this scenario when non-empty.
  std::vector<std::size_t> n_grid;
  ScalingFocus focus = ScalingFocus::None;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Table1;
  std::string name;
  std::vector<Method> methods;
  std::vector<Scenario> scenarios;
  std::vector<std::size_t> n_grid;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  double success_threshold = 0.1;
  std::size_t iters = 100;
  std::size_t init_iters = kDefaultInitIters;
  double ridge = 0.0;
  /// Eigenvalue floor for Ω iterates; 0 means fail on an indefinite iterate.
  double clip_floor = 0.0;
  std::size_t width_draws = 2000;
  std::size_t probe_dim = 10;
  bool paper_scale = false;
  /// Worker count; 0 means one per logical core. Never affects results.
  std::size_t threads = 0;

  /// Throws ConfigError for empty grids, zero trials, or bad dimensions.
  void validate() const;
  const std::vector<std::size_t>& grid_for(const Scenario& s) const;
};

/// The reduced default sweep for `kind`, or the published one.
ExperimentSpec default_spec(ExperimentKind kind, bool paper_scale = false);

struct TrialRecord {
  std::string method;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t s = 0;
  std::size_t trial = 0;
  /// NaN when the block is not estimated or the run failed.
  double rel_err_gamma = 0.0;
  double rel_err_omega = 0.0;
  std::optional<bool> success;
  /// NaN when no linear regime was resolved.
  double rate = 0.0;
  std::optional<double> seconds;

  // Not serialised.
  std::string scenario;
  double abs_err_gamma = 0.0;
  double abs_err_omega = 0.0;
  std::string failure;
};

struct TradeoffCurve {
  std::string method;
  std::size_t n = 0;
  std::size_t trials_used = 0;
  std::vector<double> mean_delta;
  std::vector<double> mean_rel_err_gamma;
  std::vector<double> mean_rel_err_omega;
  /// Fit of the mean Δ_t curve.
  RateFit fit;
  /// Mean of the per-trial rates that resolved.
  double mean_trial_rate = 0.0;
  std::size_t resolved_trials = 0;
};

struct ScalingPoint {
  std::string scenario;
  ScalingFocus focus = ScalingFocus::None;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t s = 0;
  std::size_t n = 0;
  double width = 0.0;
  double x = 0.0;  // width / sqrt(n)
  double mean_abs_err = 0.0;
  std::size_t trials_used = 0;
};

struct ScalingFit {
  ScalingFocus focus = ScalingFocus::None;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

struct ProbeRow {
  std::string probe;
  std::size_t n = 0;
  std::size_t trials = 0;
  double p95 = 0.0;
  double normalized = 0.0;
  double mc_mean = 0.0;
  double std_error = 0.0;
  double exact_mean = 0.0;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<TrialRecord> records;
  std::vector<TradeoffCurve> tradeoff;
  std::vector<ScalingPoint> scaling;
  std::vector<ScalingFit> scaling_fits;
  std::vector<ProbeRow> probe;
  double wall_seconds = 0.0;

  std::size_t failures() const noexcept;
};

/// Per-trial data seed. The method is left out on purpose so every method
/// sees the same instance.
std::uint64_t trial_seed(std::uint64_t base, const std::string& scenario, std::size_t n, std::size_t trial);

ExperimentResult run_table1(const ExperimentSpec& spec);
ExperimentResult run_phase_transition(const ExperimentSpec& spec);
ExperimentResult run_tradeoff(const ExperimentSpec& spec);
ExperimentResult run_error_scaling(const ExperimentSpec& spec);
ExperimentResult run_concentration_probe(const ExperimentSpec& spec);
/// Dispatches on spec.kind.
ExperimentResult run_experiment(const ExperimentSpec& spec);

struct MethodSummary {
  std::string method;
  std::string scenario;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double mean_rel_err_gamma = 0.0;
  double mean_rel_err_omega = 0.0;
  double success_rate = 0.0;
  double mean_seconds = 0.0;
};

/// Means over records grouped by (scenario, n, method), in record order.
/// Failed trials count as unsuccessful and are left out of the error means.
std::vector<MethodSummary> summarize(const ExperimentResult& result);

/// One solver run on an instance, as the sweeps do it: oracle step sizes
/// from the truth's eigenvalue bounds, oracle constraint levels, and
/// Algorithm-matched initialisation.
struct MethodRun {
  JointModel model;
  ConvergenceTrace trace;
};
MethodRun run_method(Method method, const SyntheticInstance& inst, std::size_t iters, std::size_t init_iters,
                     double ridge, double clip_floor);

// Serialisation.
nlohmann::json spec_to_json(const ExperimentSpec& spec);
/// Rejects unknown keys; `code_version`, `command` and `results` are
/// accepted and ignored so a meta file can be fed back as a config.
ExperimentSpec spec_from_json(const nlohmann::json& j);
/// Timings only with `with_seconds`, so repeated runs write identical files.
nlohmann::json result_summary_json(const ExperimentResult& result, bool with_seconds = false);

inline constexpr const char* kRecordsHeader =
    "method,n,d,m,s,trial,rel_err_gamma,rel_err_omega,success,rate,seconds";
void write_records_csv(std::ostream& out, const std::vector<TrialRecord>& records, bool with_seconds);
std::vector<TrialRecord> read_records_csv(std::istream& in);
void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffCurve>& curves);
void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points);
void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows);

/// Writes <name>.csv, <name>.meta.json and the side table for the kind into
/// `dir`. Returns the written paths.
std::vector<std::string> save_experiment(const ExperimentResult& result, const std::string& dir,
                                         bool with_seconds, const std::string& command);

}  // namespace cape
