#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "cape/constraints.hpp"
#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/experiments.hpp"
#include "cape/ingest.hpp"
#include "cape/rng.hpp"
#include "cape/solvers.hpp"
#include "cape/synth.hpp"
#include "cape/trace_io.hpp"
#include "options.hpp"

namespace cape::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Help-text provenance tags.
constexpr const char* kAlgo = " [source: published algorithm input]";
constexpr const char* kTheory = " [source: published step-size and contraction formulas]";
constexpr const char* kDesign = " [source: published experiment design]";
constexpr const char* kImpl = " [source: implementation choice]";

std::string h(const char* text, const char* tag) { return std::string(text) + tag; }

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<KeySet> keys;
  std::function<void(const json&, std::ostream&)> handler;
};

std::string command_line(int argc, const char* const* argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) {
    if (i > 1) s += ' ';
    s += argv[i];
  }
  return s;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

std::string out_dir(const json& cfg) { return get_text(cfg, "out").value_or(default_out_dir()); }

std::string num(double v) { return csv::format_double(v); }

CovarianceDesign parse_design(const json& value, std::size_t dim, const std::string& key) {
  if (value.is_object()) {
    json j = value;
    if (!j.contains("dim")) j["dim"] = dim;
    CovarianceDesign d = design_from_json(j);
    if (design_dim(d) != dim) throw ConfigError(key + ": design dimension does not match");
    return d;
  }
  if (!value.is_string()) throw ConfigError(key + ": expected a design string or object");
  const auto parts = [&] {
    std::vector<std::string> p;
    std::stringstream ss(value.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ':')) p.push_back(item);
    return p;
  }();
  auto real = [&](std::size_t i) {
    const auto v = i < parts.size() ? csv::parse_double(parts[i]) : std::nullopt;
    if (!v) throw ConfigError(key + ": bad design '" + value.get<std::string>() + "'");
    return *v;
  };
  if (parts.empty()) throw ConfigError(key + ": empty design");
  if (parts[0] == "identity" && parts.size() == 1) return IdentityDesign{dim};
  if (parts[0] == "band" && parts.size() == 3) return BandDesign{dim, real(1), real(2)};
  if (parts[0] == "block" && (parts.size() == 3 || parts.size() == 4)) {
    std::size_t k = 2;
    if (parts.size() == 4) {
      const auto v = csv::parse_integer(parts[3]);
      if (!v || *v < 1) throw ConfigError(key + ": bad block size");
      k = static_cast<std::size_t>(*v);
    }
    DenseMatrix block(k, k, real(2));
    for (std::size_t i = 0; i < k; ++i) block(i, i) = real(1);
    return BlockDiagDesign{dim, block};
  }
  throw ConfigError(key + ": unknown design '" + value.get<std::string>() +
                    "' (identity, band:DIAG:OFF or block:DIAG:OFF[:K])");
}

struct LoadedData {
  ProblemData data;
  std::optional<GroundTruth> truth;
};

LoadedData load_data_dir(const std::string& dir) {
  const fs::path p(dir);
  LoadedData out;
  out.data = {load_matrix_csv((p / "x.csv").string()), load_matrix_csv((p / "y.csv").string())};
  out.data.validate();
  if (fs::exists(p / "gamma_star.csv") && fs::exists(p / "omega_star.csv") && fs::exists(p / "sigma_x.csv")) {
    out.truth = GroundTruth{load_matrix_csv((p / "gamma_star.csv").string()),
                            load_matrix_csv((p / "omega_star.csv").string()),
                            load_matrix_csv((p / "sigma_x.csv").string())};
  }
  return out;
}

std::string require_text(const json& cfg, const std::string& key) {
  auto v = get_text(cfg, key);
  if (!v) throw ConfigError("--" + flag_name(key) + " is required");
  return *v;
}

Method method_of(const json& cfg) {
  const Method m = parse_method(get_text(cfg, "method").value_or("altiht"));
  if (m == Method::Pgd) throw ConfigError("use the pgd subcommand for the known-precision solver");
  return m;
}

// Constraint levels: explicit keys first, then the truth if the data has it.
std::pair<ConstraintSpec, ConstraintSpec> constraints_for(const json& cfg, Method method,
                                                          const std::optional<GroundTruth>& truth) {
  if (method == Method::AltIHT) {
    auto sg = get_count(cfg, "s_gamma");
    auto so = get_count(cfg, "s_omega");
    if (!sg && truth) sg = count_nonzeros(truth->gamma_star);
    if (!so && truth) so = count_nonzeros(truth->omega_star);
    if (!sg || !so) throw ConfigError("altiht needs --s-gamma and --s-omega (or truth files in the data directory)");
    return {ConstraintSpec::sparsity(*sg), ConstraintSpec::sparsity(*so, true)};
  }
  auto rg = get_real(cfg, "radius_gamma");
  auto ro = get_real(cfg, "radius_omega");
  if (!rg && truth) rg = l1_norm(truth->gamma_star);
  if (!ro && truth) ro = l1_norm(truth->omega_star);
  if (!rg || !ro) {
    throw ConfigError("altpgd-l1 needs --radius-gamma and --radius-omega (or truth files in the data directory)");
  }
  return {ConstraintSpec::l1(*rg), ConstraintSpec::l1(*ro, true)};
}

TheoryBounds bounds_from(const json& cfg, const std::optional<GroundTruth>& truth) {
  const bool manual = cfg.contains("nu_min") || cfg.contains("nu_max") || cfg.contains("tau_min") ||
                      cfg.contains("tau_max");
  if (!manual && truth) return TheoryBounds::from_truth(*truth);
  TheoryBounds b;
  b.nu_min = get_real(cfg, "nu_min").value_or(1.0);
  b.nu_max = get_real(cfg, "nu_max").value_or(1.0);
  b.tau_min = get_real(cfg, "tau_min").value_or(1.0);
  b.tau_max = get_real(cfg, "tau_max").value_or(1.0);
  b.validate();
  return b;
}

JointModel initial_model(const json& cfg, const GramStats& stats, Method method, const ConstraintSpec& gamma_spec,
                         const ConstraintSpec& omega_spec) {
  const std::size_t inner = get_count(cfg, "inner_iters").value_or(kDefaultInitIters);
  const double ridge = get_real(cfg, "ridge").value_or(0.0);
  const auto gpath = get_text(cfg, "init_gamma");
  const auto opath = get_text(cfg, "init_omega");
  if (gpath && opath) return {load_matrix_csv(*gpath), load_matrix_csv(*opath)};
  JointModel model = method == Method::AltIHT
                         ? init_iht(stats, std::get<SparsityCount>(gamma_spec.kind).s,
                                    std::get<SparsityCount>(omega_spec.kind).s, inner, ridge)
                         : init_pgd(stats, gamma_spec, omega_spec, inner, ridge);
  if (gpath) model.gamma = load_matrix_csv(*gpath);
  if (opath) model.omega = load_matrix_csv(*opath);
  return model;
}

void write_json(const fs::path& path, const json& j) { csv::write_text_file(path.string(), j.dump(2) + "\n"); }

// --- subcommands ----------------------------------------------------------

void cmd_synth(const json& cfg, std::ostream& out, const std::string& cmdline) {
  const std::size_t n = get_count(cfg, "n").value_or(1000);
  const std::size_t d = get_count(cfg, "d").value_or(20);
  const std::size_t m = get_count(cfg, "m").value_or(20);
  const std::size_t s = get_count(cfg, "s_gamma").value_or(40);
  const std::uint64_t seed = get_seed(cfg, "seed").value_or(1);
  const CovarianceDesign sigma = parse_design(cfg.value("sigma", json("identity")), d, "sigma");
  const CovarianceDesign omega = parse_design(cfg.value("omega", json("band:1:0.4")), m, "omega");
  const DenseMatrix gamma = make_sparse_gamma(d, m, s, rng::derive_seed(seed, {3}));
  const SyntheticInstance inst = sample_instance(sigma, omega, gamma, n, seed);

  const fs::path dir = ensure_dir(out_dir(cfg));
  save_matrix_csv((dir / "x.csv").string(), inst.data.x);
  save_matrix_csv((dir / "y.csv").string(), inst.data.y);
  save_matrix_csv((dir / "gamma_star.csv").string(), inst.truth.gamma_star);
  save_matrix_csv((dir / "omega_star.csv").string(), inst.truth.omega_star);
  save_matrix_csv((dir / "sigma_x.csv").string(), inst.truth.sigma_x);
  write_json(dir / "manifest.json", {{"command", cmdline},
                                     {"code_version", CAPE_VERSION},
                                     {"seed", seed},
                                     {"n", n},
                                     {"d", d},
                                     {"m", m},
                                     {"s_gamma", s},
                                     {"sigma", design_to_json(sigma)},
                                     {"omega", design_to_json(omega)}});
  out << "wrote " << dir.string() << " (n=" << n << ", d=" << d << ", m=" << m << ", s_gamma=" << s << ")\n";
}

void cmd_init(const json& cfg, std::ostream& out) {
  const LoadedData ld = load_data_dir(require_text(cfg, "data"));
  const Method method = method_of(cfg);
  const auto [gspec, ospec] = constraints_for(cfg, method, ld.truth);
  const GramStats stats(ld.data);
  json plain = cfg;
  plain.erase("init_gamma");
  plain.erase("init_omega");
  const JointModel model = initial_model(plain, stats, method, gspec, ospec);
  const fs::path dir = ensure_dir(out_dir(cfg));
  save_matrix_csv((dir / "gamma_init.csv").string(), model.gamma);
  save_matrix_csv((dir / "omega_init.csv").string(), model.omega);
  out << "gamma_nonzeros=" << count_nonzeros(model.gamma) << "\n";
  out << "omega_nonzeros=" << count_nonzeros(model.omega) << "\n";
  if (ld.truth) {
    out << "err_gamma=" << num(frobenius_dist(model.gamma, ld.truth->gamma_star)) << "\n";
    out << "err_omega=" << num(frobenius_dist(model.omega, ld.truth->omega_star)) << "\n";
  }
}

void cmd_fit(const json& cfg, std::ostream& out) {
  const LoadedData ld = load_data_dir(require_text(cfg, "data"));
  const Method method = method_of(cfg);
  const auto [gspec, ospec] = constraints_for(cfg, method, ld.truth);
  const GramStats stats(ld.data);

  SolverConfig sc;
  sc.max_iters = get_count(cfg, "iters").value_or(100);
  sc.gamma_constraint = gspec;
  sc.omega_constraint = ospec;
  auto eg = get_real(cfg, "eta_gamma");
  auto eo = get_real(cfg, "eta_omega");
  if (!eg || !eo) {
    const bool manual = cfg.contains("nu_min") || cfg.contains("nu_max");
    if (!ld.truth && !manual) {
      throw ConfigError("--eta-gamma/--eta-omega are required without truth files or eigenvalue bounds");
    }
    const StepSizes steps = theory_step_sizes(bounds_from(cfg, ld.truth));
    if (!eg) eg = steps.eta_gamma;
    if (!eo) eo = steps.eta_omega;
  }
  sc.eta_gamma = *eg;
  sc.eta_omega = *eo;
  const std::string fallback = get_text(cfg, "pd_fallback").value_or("error");
  if (fallback == "clip") {
    sc.pd_fallback = ClipEigen{get_real(cfg, "clip_floor").value_or(1e-6)};
  } else if (fallback != "error") {
    throw ConfigError("--pd-fallback must be 'error' or 'clip'");
  }
  if (ld.truth) sc.trace_truth = &*ld.truth;

  const JointModel init = initial_model(cfg, stats, method, gspec, ospec);
  const SolverResult r = method == Method::AltIHT ? alt_iht(stats, init, sc) : alt_pgd(stats, init, sc);

  const bool timing = get_flag(cfg, "timing");
  const fs::path dir = ensure_dir(out_dir(cfg));
  save_matrix_csv((dir / "gamma_hat.csv").string(), r.model.gamma);
  save_matrix_csv((dir / "omega_hat.csv").string(), r.model.omega);
  save_trace_csv((dir / "trace.csv").string(), r.trace, timing);
  json tj = trace_to_json(r.trace, sc, timing);
  tj["method"] = to_string(method);
  write_json(dir / "trace.json", tj);

  const auto& last = r.trace.records.back();
  out << "method=" << to_string(method) << "\n";
  out << "iterations=" << r.trace.iterations() << "\n";
  out << "objective=" << num(last.objective) << "\n";
  if (last.delta) {
    out << "err_gamma=" << num(*last.err_gamma) << "\n";
    out << "err_omega=" << num(*last.err_omega) << "\n";
  }
  if (r.trace.clip_events() > 0) out << "clip_events=" << r.trace.clip_events() << "\n";
}

void cmd_pgd(const json& cfg, std::ostream& out) {
  const std::string data_dir = require_text(cfg, "data");
  const LoadedData ld = load_data_dir(data_dir);
  const std::string omega_path = get_text(cfg, "omega_star").value_or((fs::path(data_dir) / "omega_star.csv").string());
  const DenseMatrix omega_star = load_matrix_csv(omega_path);
  ConstraintSpec spec;
  if (auto s = get_count(cfg, "s_gamma")) {
    spec = ConstraintSpec::sparsity(*s);
  } else if (auto r = get_real(cfg, "radius_gamma")) {
    spec = ConstraintSpec::l1(*r);
  } else if (ld.truth) {
    spec = ConstraintSpec::sparsity(count_nonzeros(ld.truth->gamma_star));
  } else {
    throw ConfigError("pgd needs --s-gamma or --radius-gamma");
  }
  double eta = 0.0;
  if (auto e = get_real(cfg, "eta")) {
    eta = *e;
  } else {
    std::optional<GroundTruth> truth = ld.truth;
    if (truth) truth->omega_star = omega_star;
    const bool manual = cfg.contains("nu_min") || cfg.contains("nu_max");
    if (!truth && !manual) throw ConfigError("--eta is required without truth files or eigenvalue bounds");
    eta = pgd_step_size(bounds_from(cfg, truth));
  }
  const std::size_t iters = get_count(cfg, "iters").value_or(100);
  const PgdResult r = pgd(ld.data, omega_star, spec, eta, iters, ld.truth ? &ld.truth->gamma_star : nullptr);
  const fs::path dir = ensure_dir(out_dir(cfg));
  save_matrix_csv((dir / "gamma_hat.csv").string(), r.gamma);
  save_trace_csv((dir / "trace.csv").string(), r.trace, get_flag(cfg, "timing"));
  out << "eta=" << num(eta) << "\n";
  out << "iterations=" << r.trace.iterations() << "\n";
  out << "objective=" << num(r.trace.records.back().objective) << "\n";
  if (r.trace.records.back().err_gamma) out << "err_gamma=" << num(*r.trace.records.back().err_gamma) << "\n";
}

void cmd_exp(const json& cfg, std::ostream& out, const std::string& kind, const std::string& cmdline) {
  json spec_json = cfg;
  for (const char* k : {"out", "timing"}) spec_json.erase(k);
  if (spec_json.contains("kind") && spec_json.at("kind") != kind) {
    throw ConfigError("config is for '" + spec_json.at("kind").get<std::string>() + "', not '" + kind + "'");
  }
  spec_json["kind"] = kind;
  const ExperimentSpec spec = spec_from_json(spec_json);
  const ExperimentResult result = run_experiment(spec);
  const bool timing = get_flag(cfg, "timing");
  const auto paths = save_experiment(result, out_dir(cfg), timing, cmdline);

  for (const auto& s : summarize(result)) {
    if (spec.kind == ExperimentKind::Probe) break;
    out << s.scenario << " n=" << s.n << " " << s.method << ": rel_err_gamma=" << num(s.mean_rel_err_gamma)
        << " rel_err_omega=" << num(s.mean_rel_err_omega) << " success=" << num(s.success_rate)
        << " failures=" << s.failures << "\n";
  }
  for (const auto& c : result.tradeoff) {
    out << "tradeoff n=" << c.n << " " << c.method << ": rate=" << num(c.fit.rate) << " r2=" << num(c.fit.r_squared)
        << " floor=" << num(c.fit.floor) << "\n";
  }
  for (const auto& f : result.scaling_fits) {
    out << "scaling " << to_string(f.focus) << ": slope=" << num(f.slope) << " intercept=" << num(f.intercept)
        << " r2=" << num(f.r_squared) << "\n";
  }
  for (const auto& p : result.probe) {
    out << "probe " << p.probe << " n=" << p.n << ": normalized_p95=" << num(p.normalized)
        << " mc_mean=" << num(p.mc_mean) << " exact_mean=" << num(p.exact_mean) << "\n";
  }
  for (const auto& p : paths) out << "wrote " << p << "\n";
}

void cmd_width(const json& cfg, std::ostream& out) {
  const auto dim = get_count(cfg, "dim");
  const auto s = get_count(cfg, "s");
  if (!dim || !s) throw ConfigError("width needs --dim and --s");
  const std::size_t draws = get_count(cfg, "draws").value_or(2000);
  const WidthEstimate w = gaussian_width_sparse(*dim, *s, draws, get_seed(cfg, "seed").value_or(1),
                                                get_count(cfg, "threads").value_or(0));
  out << "mean=" << num(w.mean) << "\n";
  out << "std_error=" << num(w.std_error) << "\n";
  out << "draws=" << w.draws << "\n";
  if (auto dir = get_text(cfg, "out")) {
    write_json(ensure_dir(*dir) / "width.json",
               {{"dim", *dim}, {"s", *s}, {"draws", draws}, {"mean", w.mean}, {"std_error", w.std_error}});
  }
}

void cmd_ingest(const json& cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir = ensure_dir(out_dir(cfg));
  if (get_flag(cfg, "simulate")) {
    const SimulatedPanel sim = simulate_panel(get_count(cfg, "sim_tickers").value_or(20),
                                              get_count(cfg, "sim_days").value_or(200),
                                              get_count(cfg, "sim_sectors").value_or(4),
                                              get_seed(cfg, "seed").value_or(7));
    std::ostringstream prices;
    write_prices(prices, sim.panel);
    csv::write_text_file((dir / "prices.csv").string(), prices.str());
    std::string sectors = "ticker,sector\n";
    for (const auto& [t, s] : sim.sectors) sectors += t + "," + s + "\n";
    csv::write_text_file((dir / "sectors.csv").string(), sectors);
    out << "wrote " << (dir / "prices.csv").string() << " and " << (dir / "sectors.csv").string() << "\n";
    return;
  }

  std::optional<std::vector<std::string>> filter;
  if (cfg.contains("tickers")) filter = cfg.at("tickers").get<std::vector<std::string>>();
  const PricePanel panel = load_prices(require_text(cfg, "prices"), filter, get_flag(cfg, "drop_incomplete"));
  const ProblemData data = lag_design(log_returns(panel));
  const Method method = method_of(cfg);

  CvSpec cv;
  cv.folds = get_count(cfg, "folds").value_or(5);
  cv.iters = get_count(cfg, "iters").value_or(100);
  cv.init_iters = get_count(cfg, "inner_iters").value_or(kDefaultInitIters);
  cv.ridge = get_real(cfg, "ridge").value_or(0.0);
  cv.clip_floor = get_real(cfg, "clip_floor").value_or(0.0);
  cv.threads = get_count(cfg, "threads").value_or(0);
  if (auto g = get_text(cfg, "cv_grid")) {
    try {
      cv.grid = cv_grid_from_json(json::parse(csv::read_text_file(*g)));
    } catch (const json::parse_error& e) {
      throw ConfigError(*g + ": invalid JSON: " + e.what());
    }
  } else {
    cv.grid = default_cv_grid(data, method, cv.ridge);
  }
  const CvResult res = cross_validate(data, cv, method);

  const SolverResult fit = fit_point(data, res.best_point, method, cv.iters, cv.init_iters, cv.ridge, cv.clip_floor);
  std::optional<SectorMap> sectors;
  if (auto sp = get_text(cfg, "sectors")) sectors = load_sector_map(*sp);
  const PatternExport pattern = export_pattern(fit.model.omega, panel.tickers, sectors);
  for (const auto& w : pattern.warnings) err << "warning: " << w << "\n";

  std::ostringstream scores;
  scores << "point,fold,score\n";
  for (const auto& s : res.scores) scores << s.point << ',' << s.fold << ',' << csv::format_optional(s.score) << '\n';
  csv::write_text_file((dir / "cv_scores.csv").string(), scores.str());
  json means = json::array();
  for (double v : res.mean_scores) means.push_back(std::isnan(v) ? json(nullptr) : json(v));
  write_json(dir / "cv.json", {{"grid", cv_grid_to_json(cv.grid)},
                               {"mean_scores", means},
                               {"best", res.best},
                               {"folds", cv.folds},
                               {"method", to_string(method)}});
  save_matrix_csv((dir / "gamma_hat.csv").string(), fit.model.gamma);
  save_matrix_csv((dir / "omega_hat.csv").string(), fit.model.omega);
  save_pattern(pattern, (dir / "pattern.csv").string(), (dir / "pattern.json").string());
  const SectorContrast sc = sector_contrast(pattern);
  write_json(dir / "fit.json", {{"tickers", panel.tickers.size()},
                                {"dates", panel.dates.size()},
                                {"n", data.n()},
                                {"best_point", cv_grid_to_json({res.best_point})[0]},
                                {"within_sector_mean_abs", std::isnan(sc.within) ? json(nullptr) : json(sc.within)},
                                {"cross_sector_mean_abs", std::isnan(sc.cross) ? json(nullptr) : json(sc.cross)}});
  out << "tickers=" << panel.tickers.size() << "\n";
  out << "n=" << data.n() << "\n";
  out << "best_point=" << res.best << "\n";
  out << "best_score=" << num(res.mean_scores[res.best]) << "\n";
  if (sectors) {
    out << "within_sector_mean_abs=" << num(sc.within) << "\n";
    out << "cross_sector_mean_abs=" << num(sc.cross) << "\n";
  }
}

void cmd_theory(const json& cfg, std::ostream& out) {
  std::optional<GroundTruth> truth;
  if (auto dir = get_text(cfg, "data")) truth = load_data_dir(*dir).truth;
  const TheoryBounds b = bounds_from(cfg, truth);
  const StepSizes steps = theory_step_sizes(b);
  const Contraction c = theory_contraction(b);
  out << "nu_min=" << num(b.nu_min) << "\nnu_max=" << num(b.nu_max) << "\n";
  out << "tau_min=" << num(b.tau_min) << "\ntau_max=" << num(b.tau_max) << "\n";
  out << "eta_gamma=" << num(steps.eta_gamma) << "\n";
  out << "eta_omega=" << num(steps.eta_omega) << "\n";
  out << "R=" << num(c.r_ball) << "\n";
  out << "rho_pop=" << num(c.rho_pop) << "\n";
  out << "pgd_eta=" << num(pgd_step_size(b)) << "\n";
  out << "sparsity_inflation=" << num(sparsity_inflation(c.rho_pop)) << "\n";
}

void add_bounds(KeySet& k) {
  k.add({"nu_min", KeyType::Real, h("smallest eigenvalue of the noise precision", kTheory)});
  k.add({"nu_max", KeyType::Real, h("largest eigenvalue of the noise precision", kTheory)});
  k.add({"tau_min", KeyType::Real, h("smallest eigenvalue of the predictor covariance", kTheory)});
  k.add({"tau_max", KeyType::Real, h("largest eigenvalue of the predictor covariance", kTheory)});
}

void add_constraints(KeySet& k) {
  k.add({"method", KeyType::Text, h("altiht (hard thresholding) or altpgd-l1 (l1-ball projection)", kAlgo)});
  k.add({"s_gamma", KeyType::Count, h("sparsity budget for the coefficient matrix; default: truth", kAlgo)});
  k.add({"s_omega", KeyType::Count, h("sparsity budget for the precision matrix; default: truth", kAlgo)});
  k.add({"radius_gamma", KeyType::Real, h("l1 radius for the coefficient matrix; default: truth", kAlgo)});
  k.add({"radius_omega", KeyType::Real, h("l1 radius for the precision matrix; default: truth", kAlgo)});
  k.add({"inner_iters", KeyType::Count, h("gradient steps inside initialisation (default 2)", kDesign)});
  k.add({"ridge", KeyType::Real, h("ridge added to the residual moment before inversion (default 0)", kImpl)});
}

std::string error_kind(int code) {
  switch (code) {
    case kExitConfig: return "config";
    case kExitNumeric: return "numeric";
    case kExitIo: return "io";
    default: return "internal";
  }
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cape: joint sparse regression and precision-matrix estimation"};
  app.set_version_flag("--version", std::string(CAPE_VERSION));
  app.require_subcommand(1);
  const std::string cmdline = command_line(argc, argv);

  std::map<std::string, Command> commands;
  auto make = [&](const std::string& name, const std::string& desc) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, desc);
    c.keys = std::make_unique<KeySet>(*c.app);
    c.keys->allow_informational({"code_version", "command"});
    return c;
  };

  {
    Command& c = make("synth", "sample a synthetic instance and write it as CSV");
    c.keys->add({"out", KeyType::Text, h("output directory (default $CAPE_OUT_DIR or cape-out)", kImpl)});
    c.keys->add({"seed", KeyType::Integer, h("random seed (default 1)", kImpl)});
    c.keys->add({"n", KeyType::Count, h("number of samples (default 1000)", kDesign)});
    c.keys->add({"d", KeyType::Count, h("number of predictors (default 20)", kDesign)});
    c.keys->add({"m", KeyType::Count, h("number of responses (default 20)", kDesign)});
    c.keys->add({"s_gamma", KeyType::Count, h("nonzeros in the true coefficient matrix (default 40)", kDesign)});
    c.keys->add({"sigma", KeyType::Json,
                 h("predictor covariance: identity, band:DIAG:OFF or block:DIAG:OFF[:K] (default identity)", kDesign)});
    c.keys->add({"omega", KeyType::Json, h("noise precision design, same syntax (default band:1:0.4)", kDesign)});
    c.keys->allow_informational({"code_version", "command", "designs"});
    c.handler = [&cmdline](const json& cfg, std::ostream& o) { cmd_synth(cfg, o, cmdline); };
  }
  {
    Command& c = make("init", "run only the initialisation and write the starting point");
    c.keys->add({"data", KeyType::Text, h("directory with x.csv and y.csv (truth files optional)", kImpl)});
    c.keys->add({"out", KeyType::Text, h("output directory", kImpl)});
    add_constraints(*c.keys);
    c.handler = cmd_init;
  }
  {
    Command& c = make("fit", "fit both matrices by alternating gradient steps; writes trace.csv");
    c.keys->add({"data", KeyType::Text, h("directory with x.csv and y.csv (truth files optional)", kImpl)});
    c.keys->add({"out", KeyType::Text, h("output directory", kImpl)});
    add_constraints(*c.keys);
    c.keys->add({"iters", KeyType::Count, h("iteration count T (default 100)", kAlgo)});
    c.keys->add({"eta_gamma", KeyType::Real, h("step size for the coefficient block; default: theory step", kAlgo)});
    c.keys->add({"eta_omega", KeyType::Real, h("step size for the precision block; default: theory step", kAlgo)});
    add_bounds(*c.keys);
    c.keys->add({"init_gamma", KeyType::Text, h("CSV starting coefficient matrix instead of the initialiser", kImpl)});
    c.keys->add({"init_omega", KeyType::Text, h("CSV starting precision matrix instead of the initialiser", kImpl)});
    c.keys->add({"pd_fallback", KeyType::Text, h("error (default) or clip when an iterate is indefinite", kImpl)});
    c.keys->add({"clip_floor", KeyType::Real, h("eigenvalue floor for clip (default 1e-6)", kImpl)});
    c.keys->add({"timing", KeyType::Flag, h("fill the seconds column of trace.csv", kImpl)});
    c.handler = cmd_fit;
  }
  {
    Command& c = make("pgd", "projected gradient descent with a known precision matrix");
    c.keys->add({"data", KeyType::Text, h("directory with x.csv and y.csv", kImpl)});
    c.keys->add({"out", KeyType::Text, h("output directory", kImpl)});
    c.keys->add({"omega_star", KeyType::Text, h("CSV precision matrix (default <data>/omega_star.csv)", kAlgo)});
    c.keys->add({"s_gamma", KeyType::Count, h("sparsity budget; default: truth", kAlgo)});
    c.keys->add({"radius_gamma", KeyType::Real, h("l1 radius instead of a sparsity budget", kAlgo)});
    c.keys->add({"eta", KeyType::Real, h("step size; default 2/(tau_max nu_max + tau_min nu_min)", kTheory)});
    add_bounds(*c.keys);
    c.keys->add({"iters", KeyType::Count, h("iteration count (default 100)", kAlgo)});
    c.keys->add({"timing", KeyType::Flag, h("fill the seconds column of trace.csv", kImpl)});
    c.handler = cmd_pgd;
  }
  std::string exp_kind;
  {
    Command& c = make("exp", "run a seeded experiment sweep: table1, phase, tradeoff, scaling or probe");
    c.app->add_option("kind", exp_kind, "experiment kind")
        ->required()
        ->check(CLI::IsMember({"table1", "phase", "tradeoff", "scaling", "probe"}));
    c.keys->add({"out", KeyType::Text, h("output directory", kImpl)});
    c.keys->add({"name", KeyType::Text, h("file stem for outputs (default: the kind)", kImpl)});
    c.keys->add({"seed", KeyType::Integer, h("base seed of the sweep", kImpl)});
    c.keys->add({"trials", KeyType::Count, h("trials per grid point", kDesign)});
    c.keys->add({"iters", KeyType::Count, h("solver iterations per trial", kAlgo)});
    c.keys->add({"n_grid", KeyType::CountList, h("comma-separated sample sizes", kDesign)});
    c.keys->add({"methods", KeyType::TextList, h("comma-separated: altiht, altpgd-l1, pgd", kDesign)});
    c.keys->add({"success_threshold", KeyType::Real, h("relative-error bound for a success (default 0.1)", kDesign)});
    c.keys->add({"init_iters", KeyType::Count, h("initialisation steps (default 2)", kDesign)});
    c.keys->add({"ridge", KeyType::Real, h("initialisation ridge (default 0)", kImpl)});
    c.keys->add({"clip_floor", KeyType::Real, h("eigenvalue floor for indefinite iterates; 0 fails the trial", kImpl)});
    c.keys->add({"width_draws", KeyType::Count, h("Monte Carlo draws per Gaussian width", kImpl)});
    c.keys->add({"probe_dim", KeyType::Count, h("dimension of the concentration probe (<= 30)", kImpl)});
    c.keys->add({"paper_scale", KeyType::Flag, h("use the published grid sizes and trial counts", kDesign)});
    c.keys->add({"threads", KeyType::Count, h("worker threads (default: logical cores); results do not depend on it", kImpl)});
    c.keys->add({"timing", KeyType::Flag, h("fill the seconds column of the records CSV", kImpl)});
    c.keys->allow_informational({"code_version", "command", "results"});
    c.keys->allow_passthrough({"kind", "scenarios"});
    c.handler = [&exp_kind, &cmdline](const json& cfg, std::ostream& o) { cmd_exp(cfg, o, exp_kind, cmdline); };
  }
  {
    Command& c = make("width", "Monte Carlo Gaussian width of s-sparse unit vectors");
    c.keys->add({"dim", KeyType::Count, h("ambient dimension", kTheory)});
    c.keys->add({"s", KeyType::Count, h("sparsity level", kTheory)});
    c.keys->add({"draws", KeyType::Count, h("Monte Carlo draws (default 2000)", kImpl)});
    c.keys->add({"seed", KeyType::Integer, h("random seed (default 1)", kImpl)});
    c.keys->add({"threads", KeyType::Count, h("worker threads; results do not depend on it", kImpl)});
    c.keys->add({"out", KeyType::Text, h("optional directory for width.json", kImpl)});
    c.handler = cmd_width;
  }
  {
    Command& c = make("ingest", "price panel -> lag-1 log-returns -> cross-validated fit -> sector pattern");
    c.keys->add({"prices", KeyType::Text, h("CSV: date column then one closing-price column per ticker", kDesign)});
    c.keys->add({"sectors", KeyType::Text, h("CSV ticker,sector used to order the exported pattern", kDesign)});
    c.keys->add({"tickers", KeyType::TextList, h("comma-separated subset of tickers to keep", kImpl)});
    c.keys->add({"drop_incomplete", KeyType::Flag, h("drop tickers with missing or non-positive prices", kImpl)});
    c.keys->add({"method", KeyType::Text, h("altiht or altpgd-l1", kAlgo)});
    c.keys->add({"cv_grid", KeyType::Text, h("JSON grid of constraints and step sizes; default: data-scaled grid", kDesign)});
    c.keys->add({"folds", KeyType::Count, h("cross-validation folds (default 5)", kDesign)});
    c.keys->add({"iters", KeyType::Count, h("solver iterations (default 100)", kAlgo)});
    c.keys->add({"inner_iters", KeyType::Count, h("initialisation steps (default 2)", kDesign)});
    c.keys->add({"ridge", KeyType::Real, h("initialisation ridge (default 0)", kImpl)});
    c.keys->add({"clip_floor", KeyType::Real, h("eigenvalue floor for indefinite iterates; 0 fails the point", kImpl)});
    c.keys->add({"threads", KeyType::Count, h("worker threads; results do not depend on it", kImpl)});
    c.keys->add({"out", KeyType::Text, h("output directory", kImpl)});
    c.keys->add({"simulate", KeyType::Flag, h("write a simulated price panel and sector map instead of fitting", kImpl)});
    c.keys->add({"sim_tickers", KeyType::Count, h("tickers in the simulated panel (default 20)", kImpl)});
    c.keys->add({"sim_days", KeyType::Count, h("days in the simulated panel (default 200)", kImpl)});
    c.keys->add({"sim_sectors", KeyType::Count, h("sectors in the simulated panel (default 4)", kImpl)});
    c.keys->add({"seed", KeyType::Integer, h("seed for the simulated panel (default 7)", kImpl)});
    c.handler = [&err](const json& cfg, std::ostream& o) { cmd_ingest(cfg, o, err); };
  }
  {
    Command& c = make("theory", "step sizes, basin radius and contraction factor from eigenvalue bounds");
    add_bounds(*c.keys);
    c.keys->add({"data", KeyType::Text, h("take the bounds from truth files in this directory", kImpl)});
    c.handler = cmd_theory;
  }

  int code = 0;
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        std::ostringstream o, er;
        app.exit(e, o, er);
        out << o.str();
        return 0;
      }
      throw ConfigError(e.what());
    }
    for (auto& [name, c] : commands) {
      if (c.app->parsed()) c.handler(c.keys->merged(), out);
    }
  } catch (const ConfigError& e) {
    code = kExitConfig;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const InvalidArgument& e) {
    code = kExitConfig;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const ShapeError& e) {
    code = kExitConfig;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const NumericError& e) {
    code = kExitNumeric;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const IoError& e) {
    code = kExitIo;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const nlohmann::json::exception& e) {
    code = kExitConfig;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    code = 1;
    err << "error[" << error_kind(code) << "]: " << one_line(e.what()) << "\n";
  }
  return code;
}

}  // namespace cape::cli
