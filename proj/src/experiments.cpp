#include "cape/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "cape/errors.hpp"
#include "cape/parallel.hpp"
#include "cape/rng.hpp"

namespace cape {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double relative(double err, double norm) { return norm > 0.0 ? err / norm : err; }

Scenario make_scenario(std::string label, std::size_t d, std::size_t m, std::size_t s_gamma,
                       CovarianceDesign sigma, CovarianceDesign omega, ScalingFocus focus = ScalingFocus::None,
                       std::vector<std::size_t> n_grid = {}) {
  return {std::move(label), d, m, s_gamma, std::move(sigma), std::move(omega), std::move(n_grid), focus};
}

BlockDiagDesign pair_blocks(std::size_t dim, double off) {
  return {dim, DenseMatrix::from_rows({{1.0, off}, {off, 1.0}})};
}

struct TaskOutput {
  std::vector<TrialRecord> records;            // one per method
  std::vector<ConvergenceTrace> traces;        // kept for tradeoff sweeps
  double gamma_norm = 0.0;
  double omega_norm = 0.0;
};

struct Task {
  std::size_t scenario = 0;
  std::size_t n = 0;
  std::size_t trial = 0;
};

TrialRecord evaluate(Method method, const Scenario& sc, const SyntheticInstance& inst, const ExperimentSpec& spec,
                     std::size_t n, std::size_t trial, ConvergenceTrace* keep) {
  TrialRecord rec;
  rec.method = to_string(method);
  rec.scenario = sc.label;
  rec.n = n;
  rec.d = sc.d;
  rec.m = sc.m;
  rec.s = sc.s_gamma;
  rec.trial = trial;
  const auto start = Clock::now();
  try {
    MethodRun run = run_method(method, inst, spec.iters, spec.init_iters, spec.ridge, spec.clip_floor);
    rec.seconds = seconds_since(start);
    const GroundTruth& truth = inst.truth;
    rec.abs_err_gamma = frobenius_dist(run.model.gamma, truth.gamma_star);
    rec.rel_err_gamma = relative(rec.abs_err_gamma, frobenius_norm(truth.gamma_star));
    bool ok = rec.rel_err_gamma < spec.success_threshold;
    if (method == Method::Pgd) {
      rec.abs_err_omega = kNaN;
      rec.rel_err_omega = kNaN;
    } else {
      rec.abs_err_omega = frobenius_dist(run.model.omega, truth.omega_star);
      rec.rel_err_omega = relative(rec.abs_err_omega, frobenius_norm(truth.omega_star));
      ok = ok && rec.rel_err_omega < spec.success_threshold;
    }
    rec.success = ok;
    const auto deltas = run.trace.deltas();
    rec.rate = fit_linear_regime(deltas).rate;
    if (keep != nullptr) *keep = std::move(run.trace);
  } catch (const NumericError& e) {
    rec.seconds = seconds_since(start);
    rec.rel_err_gamma = rec.rel_err_omega = rec.abs_err_gamma = rec.abs_err_omega = kNaN;
    rec.success = false;
    rec.rate = kNaN;
    rec.failure = e.what();
  }
  return rec;
}

struct Sweep {
  std::vector<Task> tasks;
  std::vector<TaskOutput> outputs;
};

Sweep run_sweep(const ExperimentSpec& spec, bool keep_traces) {
  spec.validate();
  Sweep sw;
  for (std::size_t si = 0; si < spec.scenarios.size(); ++si)
    for (std::size_t n : spec.grid_for(spec.scenarios[si]))
      for (std::size_t t = 0; t < spec.trials; ++t) sw.tasks.push_back({si, n, t});
  sw.outputs.resize(sw.tasks.size());

  // Designs are shared by every trial of a scenario; validate them up front
  // so a bad design is a configuration error rather than a per-trial failure.
  for (const auto& sc : spec.scenarios) {
    (void)make_covariance(sc.sigma);
    (void)make_covariance(sc.omega);
  }

  parallel_for(sw.tasks.size(), spec.threads, [&](std::size_t k) {
    const Task& task = sw.tasks[k];
    const Scenario& sc = spec.scenarios[task.scenario];
    const std::uint64_t seed = trial_seed(spec.seed, sc.label, task.n, task.trial);
    const InstanceSampler sampler(sc.sigma, sc.omega,
                                  make_sparse_gamma(sc.d, sc.m, sc.s_gamma, rng::derive_seed(seed, {3})));
    const SyntheticInstance inst = sampler.sample(task.n, seed);
    TaskOutput& out = sw.outputs[k];
    out.gamma_norm = frobenius_norm(inst.truth.gamma_star);
    out.omega_norm = frobenius_norm(inst.truth.omega_star);
    if (keep_traces) out.traces.resize(spec.methods.size());
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      out.records.push_back(evaluate(spec.methods[mi], sc, inst, spec, task.n, task.trial,
                                     keep_traces ? &out.traces[mi] : nullptr));
    }
  });
  return sw;
}

// Records ordered by scenario, n, method, trial.
std::vector<TrialRecord> collect(const ExperimentSpec& spec, const Sweep& sw) {
  std::vector<TrialRecord> records;
  records.reserve(sw.tasks.size() * spec.methods.size());
  std::size_t k = 0;
  for (std::size_t si = 0; si < spec.scenarios.size(); ++si) {
    for (std::size_t ni = 0; ni < spec.grid_for(spec.scenarios[si]).size(); ++ni) {
      const std::size_t block = k;
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi)
        for (std::size_t t = 0; t < spec.trials; ++t) records.push_back(sw.outputs[block + t].records[mi]);
      k += spec.trials;
    }
  }
  return records;
}

ExperimentResult finish(const ExperimentSpec& spec, const Sweep& sw, Clock::time_point start) {
  ExperimentResult result;
  result.spec = spec;
  result.records = collect(spec, sw);
  result.wall_seconds = seconds_since(start);
  return result;
}

void require_kind(const ExperimentSpec& spec, ExperimentKind kind) {
  if (spec.kind != kind) {
    throw ConfigError("expected a " + to_string(kind) + " spec, got " + to_string(spec.kind));
  }
}

std::vector<TradeoffCurve> tradeoff_curves(const ExperimentSpec& spec, const Sweep& sw) {
  std::vector<TradeoffCurve> curves;
  std::size_t k = 0;
  for (std::size_t si = 0; si < spec.scenarios.size(); ++si) {
    for (std::size_t n : spec.grid_for(spec.scenarios[si])) {
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        TradeoffCurve c;
        c.method = to_string(spec.methods[mi]);
        c.n = n;
        c.mean_delta.assign(spec.iters + 1, 0.0);
        c.mean_rel_err_gamma.assign(spec.iters + 1, 0.0);
        c.mean_rel_err_omega.assign(spec.iters + 1, 0.0);
        double rate_sum = 0.0;
        for (std::size_t t = 0; t < spec.trials; ++t) {
          const TaskOutput& out = sw.outputs[k + t];
          if (!out.records[mi].failure.empty()) continue;
          const auto& recs = out.traces[mi].records;
          for (std::size_t i = 0; i < recs.size(); ++i) {
            c.mean_delta[i] += recs[i].delta.value_or(kNaN);
            c.mean_rel_err_gamma[i] += relative(recs[i].err_gamma.value_or(kNaN), out.gamma_norm);
            c.mean_rel_err_omega[i] += relative(recs[i].err_omega.value_or(kNaN), out.omega_norm);
          }
          ++c.trials_used;
          if (!std::isnan(out.records[mi].rate)) {
            rate_sum += out.records[mi].rate;
            ++c.resolved_trials;
          }
        }
        if (c.trials_used > 0) {
          const double inv = 1.0 / static_cast<double>(c.trials_used);
          for (auto* v : {&c.mean_delta, &c.mean_rel_err_gamma, &c.mean_rel_err_omega})
            for (double& x : *v) x *= inv;
          c.fit = fit_linear_regime(c.mean_delta);
        } else {
          c.fit.rate = c.fit.r_squared = kNaN;
        }
        c.mean_trial_rate = c.resolved_trials > 0 ? rate_sum / static_cast<double>(c.resolved_trials) : kNaN;
        curves.push_back(std::move(c));
      }
      k += spec.trials;
    }
  }
  return curves;
}

ScalingFit fit_scaling(ScalingFocus focus, const std::vector<ScalingPoint>& points) {
  ScalingFit fit;
  fit.focus = focus;
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : points)
    if (p.focus == focus && p.trials_used > 0) xy.emplace_back(p.x, p.mean_abs_err);
  fit.points = xy.size();
  if (xy.size() < 3) {
    fit.slope = fit.intercept = fit.r_squared = kNaN;
    return fit;
  }
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(xy.size());
  my /= static_cast<double>(xy.size());
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

double percentile95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double pos = 0.95 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ⟨aᵀ, b⟩ = tr(ab) for square a, b.
double trace_of_product(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * b(j, i);
  return s;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Table1: return "table1";
    case ExperimentKind::Phase: return "phase";
    case ExperimentKind::Tradeoff: return "tradeoff";
    case ExperimentKind::Scaling: return "scaling";
    case ExperimentKind::Probe: return "probe";
  }
  return "unknown";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::AltIHT: return "altiht";
    case Method::AltPgdL1: return "altpgd-l1";
    case Method::Pgd: return "pgd";
  }
  return "unknown";
}

std::string to_string(ScalingFocus focus) {
  switch (focus) {
    case ScalingFocus::None: return "none";
    case ScalingFocus::Gamma: return "gamma";
    case ScalingFocus::Omega: return "omega";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (auto k : {ExperimentKind::Table1, ExperimentKind::Phase, ExperimentKind::Tradeoff, ExperimentKind::Scaling,
                 ExperimentKind::Probe})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown experiment kind '" + text + "' (expected table1, phase, tradeoff, scaling or probe)");
}

Method parse_method(const std::string& text) {
  for (auto m : {Method::AltIHT, Method::AltPgdL1, Method::Pgd})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown method '" + text + "' (expected altiht, altpgd-l1 or pgd)");
}

ScalingFocus parse_scaling_focus(const std::string& text) {
  for (auto f : {ScalingFocus::None, ScalingFocus::Gamma, ScalingFocus::Omega})
    if (to_string(f) == text) return f;
  throw ConfigError("unknown scaling focus '" + text + "' (expected none, gamma or omega)");
}

void ExperimentSpec::validate() const {
  if (name.empty()) throw ConfigError("experiment name must not be empty");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(success_threshold > 0.0)) throw ConfigError("success threshold must be positive");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (!(clip_floor >= 0.0)) throw ConfigError("clip floor must be >= 0");
  if (kind == ExperimentKind::Probe) {
    if (probe_dim < 1 || probe_dim > 30) throw ConfigError("probe dimension must lie in [1, 30]");
    if (n_grid.empty()) throw ConfigError("n grid must not be empty");
    if (trials < 2) throw ConfigError("probe needs at least two trials");
    return;
  }
  if (methods.empty()) throw ConfigError("method list must not be empty");
  if (scenarios.empty()) throw ConfigError("scenario list must not be empty");
  for (const auto& sc : scenarios) {
    if (sc.label.empty()) throw ConfigError("scenario label must not be empty");
    if (sc.d < 1 || sc.m < 1) throw ConfigError("scenario " + sc.label + ": dimensions must be positive");
    if (sc.s_gamma < 1 || sc.s_gamma > sc.d * sc.m) {
      throw ConfigError("scenario " + sc.label + ": s_gamma must lie in [1, d*m]");
    }
    if (design_dim(sc.sigma) != sc.d || design_dim(sc.omega) != sc.m) {
      throw ConfigError("scenario " + sc.label + ": design dimensions do not match d and m");
    }
    const auto& grid = grid_for(sc);
    if (grid.empty()) throw ConfigError("scenario " + sc.label + ": n grid must not be empty");
    for (std::size_t n : grid)
      if (n < 1) throw ConfigError("scenario " + sc.label + ": n must be positive");
  }
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    for (std::size_t j = i + 1; j < scenarios.size(); ++j)
      if (scenarios[i].label == scenarios[j].label) throw ConfigError("duplicate scenario label " + scenarios[i].label);
}

const std::vector<std::size_t>& ExperimentSpec::grid_for(const Scenario& s) const {
  return s.n_grid.empty() ? n_grid : s.n_grid;
}

ExperimentSpec default_spec(ExperimentKind kind, bool paper_scale) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.name = to_string(kind);
  spec.paper_scale = paper_scale;
  spec.seed = 20240101;
  switch (kind) {
    case ExperimentKind::Table1:
      spec.methods = {Method::AltIHT, Method::AltPgdL1};
      spec.iters = 200;
      spec.trials = paper_scale ? 50 : 10;
      spec.scenarios.push_back(make_scenario("n6000-d100", 100, 100, 200, BandDesign{100, 0.5, 0.15},
                                             BandDesign{100, 0.6, 0.18}, ScalingFocus::None, {6000}));
      if (paper_scale) {
        spec.scenarios.push_back(make_scenario("n18000-d150", 150, 150, 200, BandDesign{150, 0.5, 0.15},
                                               BandDesign{150, 0.6, 0.18}, ScalingFocus::None, {18000}));
        spec.scenarios.push_back(make_scenario("n20000-d200", 200, 200, 200, BandDesign{200, 0.5, 0.15},
                                               BandDesign{200, 0.6, 0.18}, ScalingFocus::None, {20000}));
      }
      break;
    case ExperimentKind::Phase:
      spec.methods = {Method::AltIHT, Method::AltPgdL1};
      spec.trials = paper_scale ? 100 : 40;
      spec.n_grid = {300, 400, 500, 600, 700, 800, 900, 1000, 1200, 1600, 2400};
      spec.scenarios.push_back(
          make_scenario("d50-s200", 50, 50, 200, IdentityDesign{50}, pair_blocks(50, 0.2)));
      break;
    case ExperimentKind::Tradeoff:
      spec.methods = {Method::AltIHT};
      spec.trials = paper_scale ? 50 : 20;
      spec.n_grid = {3000, 4000, 5000};
      spec.scenarios.push_back(
          make_scenario("d100-s400", 100, 100, 400, IdentityDesign{100}, BandDesign{100, 1.0, 0.4}));
      break;
    case ExperimentKind::Scaling:
      spec.methods = {Method::AltIHT};
      spec.trials = paper_scale ? 400 : 10;
      spec.n_grid = {1000, 1500, 2000, 3000, 4000, 6000};
      for (std::size_t s : {200, 250, 300}) {
        spec.scenarios.push_back(make_scenario("gamma-s" + std::to_string(s), 50, 50, s, IdentityDesign{50},
                                               pair_blocks(50, 0.3), ScalingFocus::Gamma));
      }
      for (std::size_t m : {56, 66, 76}) {
        spec.scenarios.push_back(make_scenario("omega-m" + std::to_string(m), 50, m, 50, IdentityDesign{50},
                                               pair_blocks(m, 0.3), ScalingFocus::Omega));
      }
      break;
    case ExperimentKind::Probe:
      spec.trials = paper_scale ? 10000 : 2000;
      spec.n_grid = {100, 400, 1600};
      spec.probe_dim = 10;
      break;
  }
  return spec;
}

std::size_t ExperimentResult::failures() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const TrialRecord& r) { return !r.failure.empty(); }));
}

std::uint64_t trial_seed(std::uint64_t base, const std::string& scenario, std::size_t n, std::size_t trial) {
  return rng::derive_seed(base, {rng::hash_name(scenario), n, trial});
}

MethodRun run_method(Method method, const SyntheticInstance& inst, std::size_t iters, std::size_t init_iters,
                     double ridge, double clip_floor) {
  const GroundTruth& truth = inst.truth;
  const TheoryBounds bounds = TheoryBounds::from_truth(truth);
  const std::size_t s_gamma = count_nonzeros(truth.gamma_star);
  const std::size_t s_omega = count_nonzeros(truth.omega_star);

  if (method == Method::Pgd) {
    PgdResult r = pgd(inst.data, truth.omega_star, ConstraintSpec::sparsity(s_gamma), pgd_step_size(bounds), iters,
                      &truth.gamma_star);
    return {{std::move(r.gamma), DenseMatrix()}, std::move(r.trace)};
  }

  const GramStats stats(inst.data);
  const StepSizes steps = theory_step_sizes(bounds);
  SolverConfig cfg;
  cfg.max_iters = iters;
  cfg.eta_gamma = steps.eta_gamma;
  cfg.eta_omega = steps.eta_omega;
  cfg.trace_truth = &truth;
  if (clip_floor > 0.0) cfg.pd_fallback = ClipEigen{clip_floor};

  if (method == Method::AltIHT) {
    cfg.gamma_constraint = ConstraintSpec::sparsity(s_gamma);
    cfg.omega_constraint = ConstraintSpec::sparsity(s_omega, true);
    const JointModel init = init_iht(stats, s_gamma, s_omega, init_iters, ridge);
    SolverResult r = alt_iht(stats, init, cfg);
    return {std::move(r.model), std::move(r.trace)};
  }
  cfg.gamma_constraint = ConstraintSpec::l1(l1_norm(truth.gamma_star));
  cfg.omega_constraint = ConstraintSpec::l1(l1_norm(truth.omega_star), true);
  const JointModel init = init_pgd(stats, cfg.gamma_constraint, cfg.omega_constraint, init_iters, ridge);
  SolverResult r = alt_pgd(stats, init, cfg);
  return {std::move(r.model), std::move(r.trace)};
}

ExperimentResult run_table1(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Table1);
  const auto start = Clock::now();
  return finish(spec, run_sweep(spec, false), start);
}

ExperimentResult run_phase_transition(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Phase);
  const auto start = Clock::now();
  return finish(spec, run_sweep(spec, false), start);
}

ExperimentResult run_tradeoff(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Tradeoff);
  if (spec.scenarios.size() != 1) throw ConfigError("tradeoff sweeps take exactly one scenario");
  const auto start = Clock::now();
  const Sweep sw = run_sweep(spec, true);
  ExperimentResult result = finish(spec, sw, start);
  result.tradeoff = tradeoff_curves(spec, sw);
  result.wall_seconds = seconds_since(start);
  return result;
}

ExperimentResult run_error_scaling(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Scaling);
  const auto start = Clock::now();
  const Sweep sw = run_sweep(spec, false);
  ExperimentResult result = finish(spec, sw, start);

  std::size_t k = 0;
  for (const auto& sc : spec.scenarios) {
    const std::size_t s_omega = count_nonzeros(make_covariance(sc.omega));
    const bool omega_focus = sc.focus == ScalingFocus::Omega;
    const std::size_t dim = omega_focus ? sc.m * sc.m : sc.d * sc.m;
    const std::size_t sparse = std::min(dim, 2 * (omega_focus ? s_omega : sc.s_gamma));
    const double width =
        gaussian_width_sparse(dim, sparse, spec.width_draws,
                              rng::derive_seed(spec.seed, {rng::hash_name("width"), dim, sparse}), spec.threads)
            .mean;
    for (std::size_t n : spec.grid_for(sc)) {
      ScalingPoint p;
      p.scenario = sc.label;
      p.focus = sc.focus;
      p.d = sc.d;
      p.m = sc.m;
      p.s = omega_focus ? s_omega : sc.s_gamma;
      p.n = n;
      p.width = width;
      p.x = width / std::sqrt(static_cast<double>(n));
      double sum = 0.0;
      for (std::size_t t = 0; t < spec.trials; ++t) {
        for (const auto& rec : sw.outputs[k + t].records) {
          if (!rec.failure.empty()) continue;
          sum += omega_focus ? rec.abs_err_omega : rec.abs_err_gamma;
          ++p.trials_used;
        }
      }
      p.mean_abs_err = p.trials_used > 0 ? sum / static_cast<double>(p.trials_used) : kNaN;
      result.scaling.push_back(p);
      k += spec.trials;
    }
  }
  for (auto focus : {ScalingFocus::Gamma, ScalingFocus::Omega}) {
    if (std::any_of(spec.scenarios.begin(), spec.scenarios.end(),
                    [&](const Scenario& s) { return s.focus == focus; })) {
      result.scaling_fits.push_back(fit_scaling(focus, result.scaling));
    }
  }
  result.wall_seconds = seconds_since(start);
  return result;
}

ExperimentResult run_concentration_probe(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Probe);
  spec.validate();
  const auto start = Clock::now();
  const std::size_t dim = spec.probe_dim;
  const InstanceSampler sampler(BandDesign{dim, 1.0, 0.3}, BandDesign{dim, 1.0, 0.4}, DenseMatrix(dim, dim));
  const DenseMatrix& sigma = sampler.truth().sigma_x;

  DenseMatrix u(dim, dim);
  {
    rng::Stream stream(rng::derive_seed(spec.seed, {rng::hash_name("probe-u")}));
    for (double& v : u.values()) v = stream.normal();
  }
  const double u_norm = frobenius_norm(u);

  ExperimentResult result;
  result.spec = spec;
  std::vector<std::size_t> grid = spec.n_grid;
  // Per (n, trial): centred quadratic form and cross term.
  std::vector<std::pair<double, double>> draws(grid.size() * spec.trials);
  parallel_for(draws.size(), spec.threads, [&](std::size_t k) {
    const std::size_t n = grid[k / spec.trials];
    const std::size_t trial = k % spec.trials;
    const SyntheticInstance inst = sampler.sample(n, trial_seed(spec.seed, "probe", n, trial));
    const DenseMatrix xtx = matmul_tn(inst.data.x, inst.data.x);
    const DenseMatrix xte = matmul_tn(inst.data.x, inst.noise);
    // tr(X U Xᵀ) = tr(U XᵀX), tr(E U Xᵀ) = tr(U XᵀE).
    draws[k] = {trace_of_product(u, xtx), trace_of_product(u, xte)};
  });

  for (std::size_t ni = 0; ni < grid.size(); ++ni) {
    const std::size_t n = grid[ni];
    const double scale = std::sqrt(static_cast<double>(n)) * u_norm;
    const double exact1 = static_cast<double>(n) * trace_of_product(sigma, u);
    for (int which = 1; which <= 2; ++which) {
      ProbeRow row;
      row.probe = which == 1 ? "quadratic" : "cross";
      row.n = n;
      row.trials = spec.trials;
      row.exact_mean = which == 1 ? exact1 : 0.0;
      std::vector<double> dev(spec.trials);
      double sum = 0.0;
      for (std::size_t t = 0; t < spec.trials; ++t) {
        const auto& dr = draws[ni * spec.trials + t];
        const double value = which == 1 ? dr.first : dr.second;
        sum += value;
        dev[t] = std::abs(value - row.exact_mean);
        TrialRecord rec;
        rec.method = row.probe;
        rec.scenario = "probe";
        rec.n = n;
        rec.d = rec.m = dim;
        rec.s = 0;
        rec.trial = t;
        rec.rel_err_gamma = dev[t] / scale;
        rec.rel_err_omega = kNaN;
        rec.rate = kNaN;
        result.records.push_back(rec);
      }
      row.mc_mean = sum / static_cast<double>(spec.trials);
      double ss = 0.0;
      for (std::size_t t = 0; t < spec.trials; ++t) {
        const auto& dr = draws[ni * spec.trials + t];
        const double value = which == 1 ? dr.first : dr.second;
        ss += (value - row.mc_mean) * (value - row.mc_mean);
      }
      row.std_error = std::sqrt(ss / static_cast<double>(spec.trials - 1) / static_cast<double>(spec.trials));
      row.p95 = percentile95(dev);
      row.normalized = row.p95 / scale;
      result.probe.push_back(row);
    }
  }
  result.wall_seconds = seconds_since(start);
  return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::Table1: return run_table1(spec);
    case ExperimentKind::Phase: return run_phase_transition(spec);
    case ExperimentKind::Tradeoff: return run_tradeoff(spec);
    case ExperimentKind::Scaling: return run_error_scaling(spec);
    case ExperimentKind::Probe: return run_concentration_probe(spec);
  }
  throw ConfigError("unknown experiment kind");
}

std::vector<MethodSummary> summarize(const ExperimentResult& result) {
  std::vector<MethodSummary> out;
  std::map<std::tuple<std::string, std::size_t, std::string>, std::size_t> index;
  std::vector<std::size_t> ok_counts;
  for (const auto& r : result.records) {
    const auto key = std::make_tuple(r.scenario, r.n, r.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      MethodSummary s;
      s.method = r.method;
      s.scenario = r.scenario;
      s.n = r.n;
      out.push_back(s);
      ok_counts.push_back(0);
    }
    MethodSummary& s = out[it->second];
    ++s.trials;
    s.mean_seconds += r.seconds.value_or(0.0);
    if (!r.failure.empty()) {
      ++s.failures;
      continue;
    }
    ++ok_counts[it->second];
    s.mean_rel_err_gamma += r.rel_err_gamma;
    s.mean_rel_err_omega += r.rel_err_omega;
    if (r.success.value_or(false)) s.success_rate += 1.0;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    const double ok = static_cast<double>(ok_counts[i]);
    s.mean_rel_err_gamma = ok > 0 ? s.mean_rel_err_gamma / ok : kNaN;
    s.mean_rel_err_omega = ok > 0 ? s.mean_rel_err_omega / ok : kNaN;
    s.success_rate /= static_cast<double>(s.trials);
    s.mean_seconds /= static_cast<double>(s.trials);
  }
  return out;
}

}  // namespace cape
