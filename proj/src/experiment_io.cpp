#include <cmath>
#include <filesystem>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/experiments.hpp"

namespace cape {

namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

template <typename T>
T take(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json scenario_to_json(const Scenario& s) {
  json j = {{"label", s.label},
            {"d", s.d},
            {"m", s.m},
            {"s_gamma", s.s_gamma},
            {"sigma", design_to_json(s.sigma)},
            {"omega", design_to_json(s.omega)},
            {"focus", to_string(s.focus)}};
  if (!s.n_grid.empty()) j["n_grid"] = s.n_grid;
  return j;
}

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  reject_unknown(j, {"label", "d", "m", "s_gamma", "sigma", "omega", "focus", "n_grid"}, "scenario");
  Scenario s;
  s.label = take<std::string>(j, "label", "scenario");
  s.d = take<std::size_t>(j, "d", s.label);
  s.m = take<std::size_t>(j, "m", s.label);
  s.s_gamma = take<std::size_t>(j, "s_gamma", s.label);
  s.sigma = design_from_json(j.at("sigma"));
  s.omega = design_from_json(j.at("omega"));
  if (j.contains("focus")) s.focus = parse_scaling_focus(take<std::string>(j, "focus", s.label));
  if (j.contains("n_grid")) s.n_grid = take<std::vector<std::size_t>>(j, "n_grid", s.label);
  return s;
}

std::string opt_number(double v) { return std::isnan(v) ? std::string() : csv::format_double(v); }

}  // namespace

json spec_to_json(const ExperimentSpec& spec) {
  json methods = json::array();
  for (auto m : spec.methods) methods.push_back(to_string(m));
  json scenarios = json::array();
  for (const auto& s : spec.scenarios) scenarios.push_back(scenario_to_json(s));
  return {{"kind", to_string(spec.kind)},
          {"name", spec.name},
          {"methods", methods},
          {"scenarios", scenarios},
          {"n_grid", spec.n_grid},
          {"trials", spec.trials},
          {"seed", spec.seed},
          {"success_threshold", spec.success_threshold},
          {"iters", spec.iters},
          {"init_iters", spec.init_iters},
          {"ridge", spec.ridge},
          {"clip_floor", spec.clip_floor},
          {"width_draws", spec.width_draws},
          {"probe_dim", spec.probe_dim},
          {"paper_scale", spec.paper_scale}};
}

ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  reject_unknown(j,
                 {"kind", "name", "methods", "scenarios", "n_grid", "trials", "seed", "success_threshold", "iters",
                  "init_iters", "ridge", "clip_floor", "width_draws", "probe_dim", "paper_scale", "threads",
                  "code_version", "command", "results"},
                 "experiment config");
  if (!j.contains("kind")) throw ConfigError("experiment config needs a 'kind'");
  const bool paper = j.contains("paper_scale") ? take<bool>(j, "paper_scale", "config") : false;
  ExperimentSpec spec = default_spec(parse_experiment_kind(take<std::string>(j, "kind", "config")), paper);
  if (j.contains("name")) spec.name = take<std::string>(j, "name", "config");
  if (j.contains("methods")) {
    spec.methods.clear();
    for (const auto& m : take<std::vector<std::string>>(j, "methods", "config")) spec.methods.push_back(parse_method(m));
  }
  if (j.contains("scenarios")) {
    if (!j.at("scenarios").is_array()) throw ConfigError("config.scenarios must be an array");
    spec.scenarios.clear();
    for (const auto& s : j.at("scenarios")) spec.scenarios.push_back(scenario_from_json(s));
  }
  if (j.contains("n_grid")) spec.n_grid = take<std::vector<std::size_t>>(j, "n_grid", "config");
  if (j.contains("trials")) spec.trials = take<std::size_t>(j, "trials", "config");
  if (j.contains("seed")) spec.seed = take<std::uint64_t>(j, "seed", "config");
  if (j.contains("success_threshold")) spec.success_threshold = take<double>(j, "success_threshold", "config");
  if (j.contains("iters")) spec.iters = take<std::size_t>(j, "iters", "config");
  if (j.contains("init_iters")) spec.init_iters = take<std::size_t>(j, "init_iters", "config");
  if (j.contains("ridge")) spec.ridge = take<double>(j, "ridge", "config");
  if (j.contains("clip_floor")) spec.clip_floor = take<double>(j, "clip_floor", "config");
  if (j.contains("width_draws")) spec.width_draws = take<std::size_t>(j, "width_draws", "config");
  if (j.contains("probe_dim")) spec.probe_dim = take<std::size_t>(j, "probe_dim", "config");
  if (j.contains("threads")) spec.threads = take<std::size_t>(j, "threads", "config");
  spec.validate();
  return spec;
}

json result_summary_json(const ExperimentResult& result, bool with_seconds) {
  json out;
  out["records"] = result.records.size();
  out["failures"] = result.failures();
  if (with_seconds) out["wall_seconds"] = result.wall_seconds;
  json groups = json::array();
  for (const auto& s : summarize(result)) {
    json g = {{"scenario", s.scenario},
              {"method", s.method},
              {"n", s.n},
              {"trials", s.trials},
              {"failures", s.failures},
              {"mean_rel_err_gamma", number_or_null(s.mean_rel_err_gamma)},
              {"mean_rel_err_omega", number_or_null(s.mean_rel_err_omega)},
              {"success_rate", s.success_rate}};
    if (with_seconds) g["mean_seconds"] = s.mean_seconds;
    groups.push_back(std::move(g));
  }
  out["groups"] = groups;
  if (!result.tradeoff.empty()) {
    json t = json::array();
    for (const auto& c : result.tradeoff) {
      t.push_back({{"method", c.method},
                   {"n", c.n},
                   {"trials_used", c.trials_used},
                   {"rate", number_or_null(c.fit.rate)},
                   {"r_squared", number_or_null(c.fit.r_squared)},
                   {"floor", c.fit.floor},
                   {"window", {c.fit.first, c.fit.last}},
                   {"resolved", c.fit.resolved},
                   {"mean_trial_rate", number_or_null(c.mean_trial_rate)},
                   {"resolved_trials", c.resolved_trials}});
    }
    out["tradeoff"] = t;
  }
  if (!result.scaling_fits.empty()) {
    json f = json::array();
    for (const auto& s : result.scaling_fits) {
      f.push_back({{"focus", to_string(s.focus)},
                   {"slope", number_or_null(s.slope)},
                   {"intercept", number_or_null(s.intercept)},
                   {"r_squared", number_or_null(s.r_squared)},
                   {"points", s.points}});
    }
    out["scaling_fits"] = f;
  }
  if (!result.probe.empty()) {
    json p = json::array();
    for (const auto& r : result.probe) {
      p.push_back({{"probe", r.probe},
                   {"n", r.n},
                   {"p95", r.p95},
                   {"normalized", r.normalized},
                   {"mc_mean", r.mc_mean},
                   {"std_error", r.std_error},
                   {"exact_mean", r.exact_mean}});
    }
    out["probe"] = p;
  }
  std::set<std::string> messages;
  for (const auto& r : result.records)
    if (!r.failure.empty() && messages.size() < 5) messages.insert(r.failure);
  if (!messages.empty()) out["failure_examples"] = messages;
  return out;
}

void write_records_csv(std::ostream& out, const std::vector<TrialRecord>& records, bool with_seconds) {
  out << kRecordsHeader << '\n';
  for (const auto& r : records) {
    out << r.method << ',' << r.n << ',' << r.d << ',' << r.m << ',' << r.s << ',' << r.trial << ','
        << opt_number(r.rel_err_gamma) << ',' << opt_number(r.rel_err_omega) << ','
        << (r.success ? (*r.success ? "1" : "0") : "") << ',' << opt_number(r.rate) << ','
        << (with_seconds ? csv::format_optional(r.seconds) : std::string()) << '\n';
  }
}

std::vector<TrialRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != csv::split_line(kRecordsHeader)) {
    throw IoError(std::string("records csv: expected header '") + kRecordsHeader + "'");
  }
  std::vector<TrialRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    const std::string where = "records csv line " + std::to_string(lineno);
    if (f.size() != 11) throw IoError(where + ": expected 11 fields, got " + std::to_string(f.size()));
    auto count = [&](const std::string& s, const char* name) {
      const auto v = csv::parse_integer(s);
      if (!v || *v < 0) throw IoError(where + ": bad " + name);
      return static_cast<std::size_t>(*v);
    };
    auto real = [&](const std::string& s, const char* name) {
      if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
      const auto v = csv::parse_double(s);
      if (!v) throw IoError(where + ": bad " + name);
      return *v;
    };
    TrialRecord r;
    r.method = f[0];
    r.n = count(f[1], "n");
    r.d = count(f[2], "d");
    r.m = count(f[3], "m");
    r.s = count(f[4], "s");
    r.trial = count(f[5], "trial");
    r.rel_err_gamma = real(f[6], "rel_err_gamma");
    r.rel_err_omega = real(f[7], "rel_err_omega");
    if (f[8] == "1") {
      r.success = true;
    } else if (f[8] == "0") {
      r.success = false;
    } else if (!f[8].empty()) {
      throw IoError(where + ": bad success flag");
    }
    r.rate = real(f[9], "rate");
    if (!f[10].empty()) r.seconds = real(f[10], "seconds");
    records.push_back(r);
  }
  return records;
}

void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffCurve>& curves) {
  out << "method,n,iter,mean_delta,mean_rel_err_gamma,mean_rel_err_omega\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.mean_delta.size(); ++i) {
      out << c.method << ',' << c.n << ',' << i << ',' << opt_number(c.mean_delta[i]) << ','
          << opt_number(c.mean_rel_err_gamma[i]) << ',' << opt_number(c.mean_rel_err_omega[i]) << '\n';
    }
  }
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points) {
  out << "scenario,focus,d,m,s,n,width,x,mean_abs_err,trials_used\n";
  for (const auto& p : points) {
    out << p.scenario << ',' << to_string(p.focus) << ',' << p.d << ',' << p.m << ',' << p.s << ',' << p.n << ','
        << csv::format_double(p.width) << ',' << csv::format_double(p.x) << ',' << opt_number(p.mean_abs_err) << ','
        << p.trials_used << '\n';
  }
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows) {
  out << "probe,n,trials,p95,normalized,mc_mean,std_error,exact_mean\n";
  for (const auto& r : rows) {
    out << r.probe << ',' << r.n << ',' << r.trials << ',' << csv::format_double(r.p95) << ','
        << csv::format_double(r.normalized) << ',' << csv::format_double(r.mc_mean) << ','
        << csv::format_double(r.std_error) << ',' << csv::format_double(r.exact_mean) << '\n';
  }
}

std::vector<std::string> save_experiment(const ExperimentResult& result, const std::string& dir, bool with_seconds,
                                         const std::string& command) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  const auto base = (std::filesystem::path(dir) / result.spec.name).string();
  std::vector<std::string> written;

  auto emit = [&](const std::string& path, const std::string& text) {
    csv::write_text_file(path, text);
    written.push_back(path);
  };
  std::ostringstream records;
  write_records_csv(records, result.records, with_seconds);
  emit(base + ".csv", records.str());

  json meta = spec_to_json(result.spec);
  meta["command"] = command;
  meta["code_version"] = CAPE_VERSION;
  meta["results"] = result_summary_json(result, with_seconds);
  emit(base + ".meta.json", meta.dump(2) + "\n");

  if (!result.tradeoff.empty()) {
    std::ostringstream s;
    write_tradeoff_csv(s, result.tradeoff);
    emit(base + ".traces.csv", s.str());
  }
  if (!result.scaling.empty()) {
    std::ostringstream s;
    write_scaling_csv(s, result.scaling);
    emit(base + ".scaling.csv", s.str());
  }
  if (!result.probe.empty()) {
    std::ostringstream s;
    write_probe_csv(s, result.probe);
    emit(base + ".probe.csv", s.str());
  }
  return written;
}

}  // namespace cape
