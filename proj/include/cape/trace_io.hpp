#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "cape/solvers.hpp"

namespace cape {

/// Header `iter,objective,err_gamma,err_omega,delta,seconds`. Error columns
/// are empty without truth; `seconds` is empty unless `with_seconds`, so two
/// runs with the same inputs produce identical bytes.
void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace, bool with_seconds = false);
ConvergenceTrace read_trace_csv(std::istream& in);
void save_trace_csv(const std::string& path, const ConvergenceTrace& trace, bool with_seconds = false);

nlohmann::json constraint_to_json(const ConstraintSpec& spec);
ConstraintSpec constraint_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SolverConfig& cfg);
/// The trace fields plus a `config` echo and the clip-event count.
nlohmann::json trace_to_json(const ConvergenceTrace& trace, const SolverConfig& cfg, bool with_seconds = false);

}  // namespace cape
