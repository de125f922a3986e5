#include "cape/trace_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cape/csv.hpp"
#include "cape/errors.hpp"

namespace cape {

namespace {

constexpr const char* kTraceHeader = "iter,objective,err_gamma,err_omega,delta,seconds";

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace, bool with_seconds) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.iter << ',' << csv::format_double(r.objective) << ',' << csv::format_optional(r.err_gamma) << ','
        << csv::format_optional(r.err_omega) << ',' << csv::format_optional(r.delta) << ','
        << (with_seconds ? csv::format_double(r.seconds) : std::string()) << '\n';
  }
}

ConvergenceTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != csv::split_line(kTraceHeader)) {
    throw IoError("trace csv: expected header '" + std::string(kTraceHeader) + "'");
  }
  ConvergenceTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    const auto where = "trace csv line " + std::to_string(lineno);
    if (f.size() != 6) throw IoError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    TraceRecord r;
    const auto iter = csv::parse_integer(f[0]);
    const auto obj = csv::parse_double(f[1]);
    if (!iter || *iter < 0 || !obj) throw IoError(where + ": bad iter or objective");
    r.iter = static_cast<std::size_t>(*iter);
    r.objective = *obj;
    auto opt = [&](const std::string& field, const char* name) -> std::optional<double> {
      if (field.empty()) return std::nullopt;
      auto v = csv::parse_double(field);
      if (!v) throw IoError(where + ": bad " + name);
      return v;
    };
    r.err_gamma = opt(f[2], "err_gamma");
    r.err_omega = opt(f[3], "err_omega");
    r.delta = opt(f[4], "delta");
    r.seconds = opt(f[5], "seconds").value_or(0.0);
    trace.records.push_back(r);
  }
  return trace;
}

void save_trace_csv(const std::string& path, const ConvergenceTrace& trace, bool with_seconds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_trace_csv(out, trace, with_seconds);
  if (!out) throw IoError("failed writing " + path);
}

nlohmann::json constraint_to_json(const ConstraintSpec& spec) {
  nlohmann::json j;
  if (const auto* s = std::get_if<SparsityCount>(&spec.kind)) {
    j["kind"] = "sparsity";
    j["s"] = s->s;
  } else if (const auto* l = std::get_if<L1Ball>(&spec.kind)) {
    j["kind"] = "l1";
    j["radius"] = l->radius;
  } else {
    j["kind"] = "none";
  }
  j["symmetric"] = spec.symmetric;
  return j;
}

ConstraintSpec constraint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("constraint needs a 'kind' field");
  for (const auto& [key, value] : j.items()) {
    if (key != "kind" && key != "s" && key != "radius" && key != "symmetric") {
      throw ConfigError("unknown constraint key '" + key + "'");
    }
  }
  try {
    const auto kind = j.at("kind").get<std::string>();
    const bool sym = j.value("symmetric", false);
    if (kind == "sparsity") return ConstraintSpec::sparsity(j.at("s").get<std::size_t>(), sym);
    if (kind == "l1") return ConstraintSpec::l1(j.at("radius").get<double>(), sym);
    if (kind == "none") return ConstraintSpec{Unconstrained{}, sym};
    throw ConfigError("unknown constraint kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("constraint: ") + e.what());
  }
}

nlohmann::json config_to_json(const SolverConfig& cfg) {
  nlohmann::json j;
  j["max_iters"] = cfg.max_iters;
  j["eta_gamma"] = cfg.eta_gamma;
  j["eta_omega"] = cfg.eta_omega;
  j["gamma_constraint"] = constraint_to_json(cfg.gamma_constraint);
  j["omega_constraint"] = constraint_to_json(cfg.omega_constraint);
  if (const auto* clip = std::get_if<ClipEigen>(&cfg.pd_fallback)) {
    j["pd_fallback"] = {{"kind", "clip"}, {"floor", clip->floor}};
  } else {
    j["pd_fallback"] = {{"kind", "error"}};
  }
  j["trace_truth"] = cfg.trace_truth != nullptr;
  return j;
}

nlohmann::json trace_to_json(const ConvergenceTrace& trace, const SolverConfig& cfg, bool with_seconds) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : trace.records) {
    records.push_back({{"iter", r.iter},
                       {"objective", r.objective},
                       {"err_gamma", optional_json(r.err_gamma)},
                       {"err_omega", optional_json(r.err_omega)},
                       {"delta", optional_json(r.delta)},
                       {"seconds", with_seconds ? nlohmann::json(r.seconds) : nlohmann::json(nullptr)},
                       {"clipped", r.clipped}});
  }
  return {{"config", config_to_json(cfg)},
          {"iterations", trace.iterations()},
          {"clip_events", trace.clip_events()},
          {"records", std::move(records)}};
}

}  // namespace cape
