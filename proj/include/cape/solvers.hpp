#pragma once

// Alternating gradient solvers for the joint (Γ, Ω) problem, their
// initialisers, projected gradient descent with a known precision matrix,
// and the step-size / contraction calculators that go with them.

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cape/constraints.hpp"
#include "cape/matrix.hpp"
#include "cape/model.hpp"

namespace cape {

/// Stop with NotPositiveDefinite when an iterate Ω_t cannot be factored.
struct FailOnIndefinite {};
/// Floor the eigenvalues of Ω_t at `floor` before inverting it. The iterate
/// itself is left as is; the event is flagged in the trace.
struct ClipEigen {
  double floor = 1e-6;
};
using PdFallback = std::variant<FailOnIndefinite, ClipEigen>;

struct SolverConfig {
  std::size_t max_iters = 100;
  double eta_gamma = 0.0;
  double eta_omega = 0.0;
  ConstraintSpec gamma_constraint;
  ConstraintSpec omega_constraint;
  PdFallback pd_fallback;
  /// When set, every trace record carries the distances to the truth.
  const GroundTruth* trace_truth = nullptr;

  void validate() const;
};

struct TraceRecord {
  std::size_t iter = 0;
  double objective = 0.0;
  std::optional<double> err_gamma;
  std::optional<double> err_omega;
  std::optional<double> delta;
  /// Wall time since the solver started.
  double seconds = 0.0;
  bool clipped = false;
};

/// One record per iterate, t = 0 included.
struct ConvergenceTrace {
  std::vector<TraceRecord> records;

  std::size_t iterations() const noexcept { return records.empty() ? 0 : records.size() - 1; }
  std::size_t clip_events() const noexcept;
  /// Δ_t for every record; throws InvalidArgument when the trace has no truth.
  std::vector<double> deltas() const;
};

struct SolverResult {
  JointModel model;
  ConvergenceTrace trace;
};

/// Algorithm: alternating gradient steps with hard thresholding. Both
/// gradients are taken at (Γ_t, Ω_t); Γ is thresholded entrywise and Ω
/// symmetrically. Both constraints must be SparsityCount.
SolverResult alt_iht(const ProblemData& data, const JointModel& init, const SolverConfig& cfg);
SolverResult alt_iht(const GramStats& stats, const JointModel& init, const SolverConfig& cfg);

/// The same loop with apply_constraint in place of hard thresholding; the
/// projected Ω is averaged with its transpose.
SolverResult alt_pgd(const ProblemData& data, const JointModel& init, const SolverConfig& cfg);
SolverResult alt_pgd(const GramStats& stats, const JointModel& init, const SolverConfig& cfg);

inline constexpr std::size_t kDefaultInitIters = 2;

/// Γ from `inner_iters` IHT steps on ½‖Y - XΓ‖² starting at 0 with step
/// 1/λ_max(XᵀX/n), then Ω = HT((S + ridge·I)⁻¹, s_omega) with S the residual
/// second moment.
JointModel init_iht(const ProblemData& data, std::size_t s_gamma, std::size_t s_omega,
                    std::size_t inner_iters = kDefaultInitIters, double ridge = 0.0);
JointModel init_iht(const GramStats& stats, std::size_t s_gamma, std::size_t s_omega,
                    std::size_t inner_iters = kDefaultInitIters, double ridge = 0.0);

/// init_iht with projected steps under arbitrary constraints. The Ω spec is
/// always applied in symmetric mode.
JointModel init_pgd(const ProblemData& data, const ConstraintSpec& gamma_spec,
                    const ConstraintSpec& omega_spec, std::size_t inner_iters = kDefaultInitIters,
                    double ridge = 0.0);
JointModel init_pgd(const GramStats& stats, const ConstraintSpec& gamma_spec,
                    const ConstraintSpec& omega_spec, std::size_t inner_iters = kDefaultInitIters,
                    double ridge = 0.0);

struct PgdResult {
  DenseMatrix gamma;
  ConvergenceTrace trace;
};

/// Projected gradient descent on (1/2n) tr((Y - XΓ) Ω⋆ (Y - XΓ)ᵀ) from Γ = 0
/// with the precision matrix held fixed. `gamma_star` adds error columns.
PgdResult pgd(const ProblemData& data, const DenseMatrix& omega_star, const ConstraintSpec& gamma_spec,
              double eta, std::size_t iters, const DenseMatrix* gamma_star = nullptr);

/// Eigenvalue bounds ν for Ω⋆ and τ for Σ_X.
struct TheoryBounds {
  double nu_min = 1.0;
  double nu_max = 1.0;
  double tau_min = 1.0;
  double tau_max = 1.0;

  static TheoryBounds from_truth(const GroundTruth& truth);
  void validate() const;
};

struct StepSizes {
  double eta_gamma = 0.0;
  double eta_omega = 0.0;
};

struct Contraction {
  /// Radius of the basin around the truth in which the contraction holds.
  double r_ball = 0.0;
  /// Population contraction factor.
  double rho_pop = 0.0;
};

/// η_Γ = 1/(ν_max τ_max + ν_min τ_min), η_Ω = 8ν_max²ν_min²/(16ν_max² + ν_min²).
StepSizes theory_step_sizes(const TheoryBounds& b);
/// R = min(τ_min ν_min/(2τ_max), 1/(8τ_max ν_max²), 1) and
/// ρ = max(1 - τ_min ν_min/(τ_max ν_max + τ_min ν_min), 1 - ν_min²/(16ν_max² + ν_min²)).
Contraction theory_contraction(const TheoryBounds& b);
/// 2/(τ_max ν_max + τ_min ν_min), the step for pgd.
double pgd_step_size(const TheoryBounds& b);
/// Factor c with s ≥ c·s⋆ sufficient for the thresholded iteration to keep
/// contracting: 1 + 4(1/ρ - 1)².
double sparsity_inflation(double rho_pop);

struct RateFit {
  double rate = 0.0;
  double r_squared = 0.0;
  double floor = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
  /// False when the window holds fewer than three points; rate and
  /// r_squared are NaN then.
  bool resolved = false;
};

/// Geometric rate of a decreasing error sequence. The floor is the mean of
/// the last tenth of the sequence (at least one point). The window runs from
/// index 1 to the first index whose value is within 2x of the floor, and
/// log(values) is fitted by least squares against the index over it; the
/// rate is exp(slope).
RateFit fit_linear_regime(std::span<const double> values);

}  // namespace cape
