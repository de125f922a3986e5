#pragma once

// Gaussian multivariate regression with an unknown noise precision:
//   Y = X Γ + E,  rows of E ~ N(0, Ω⁻¹).
// The sample loss is the conditional negative log-likelihood with constants
// dropped,
//   f_n(Γ, Ω) = -log|Ω| + (1/n) tr{(Y - XΓ) Ω (Y - XΓ)ᵀ},
// and the population loss is its expectation over fresh data.

#include <cstddef>

#include "cape/matrix.hpp"

namespace cape {

struct ProblemData {
  DenseMatrix x;  // n x d predictors
  DenseMatrix y;  // n x m responses

  std::size_t n() const noexcept { return x.rows(); }
  std::size_t d() const noexcept { return x.cols(); }
  std::size_t m() const noexcept { return y.cols(); }

  /// Throws ShapeError unless x.rows() == y.rows() >= 1.
  void validate() const;
  /// Rows [first, first + count) of both matrices.
  ProblemData rows(std::size_t first, std::size_t count) const;
};

struct JointModel {
  DenseMatrix gamma;  // d x m
  DenseMatrix omega;  // m x m, symmetric
};

struct GroundTruth {
  DenseMatrix gamma_star;
  DenseMatrix omega_star;
  DenseMatrix sigma_x;
};

/// (1/n)(Y - XΓ)ᵀ(Y - XΓ).
DenseMatrix residual_moment(const ProblemData& data, const DenseMatrix& gamma);

double sample_loss(const ProblemData& data, const JointModel& model);
/// ∇_Γ f_n = -(2/n) Xᵀ(Y - XΓ) Ω.
DenseMatrix grad_gamma(const ProblemData& data, const JointModel& model);
/// ∇_Ω f_n = -Ω⁻¹ + (1/n)(Y - XΓ)ᵀ(Y - XΓ), exactly symmetric.
DenseMatrix grad_omega(const ProblemData& data, const JointModel& model);

/// Second-moment summaries XᵀX/n, XᵀY/n, YᵀY/n. Every loss and gradient
/// above depends on the data only through these, so iterative solvers
/// precompute them once and never touch the n-row matrices again.
class GramStats {
 public:
  explicit GramStats(const ProblemData& data);

  std::size_t n() const noexcept { return n_; }
  const DenseMatrix& xtx() const noexcept { return xtx_; }
  const DenseMatrix& xty() const noexcept { return xty_; }
  const DenseMatrix& yty() const noexcept { return yty_; }

  DenseMatrix residual_moment(const DenseMatrix& gamma) const;
  DenseMatrix grad_gamma(const JointModel& model) const;
  /// Uses a caller-supplied Ω⁻¹ so solvers can share one factorisation.
  DenseMatrix grad_omega(const DenseMatrix& gamma, const DenseMatrix& omega_inverse) const;
  double loss(const DenseMatrix& gamma, const DenseMatrix& omega, double logdet_omega) const;

 private:
  std::size_t n_;
  DenseMatrix xtx_;
  DenseMatrix xty_;
  DenseMatrix yty_;
};

/// f(Γ, Ω) = -log|Ω| + tr{(Γ-Γ⋆)ᵀ Σ_X (Γ-Γ⋆) Ω + Ω⋆⁻¹ Ω}.
double population_loss(const GroundTruth& truth, const JointModel& model);
/// 2 Σ_X (Γ - Γ⋆) Ω.
DenseMatrix population_grad_gamma(const GroundTruth& truth, const JointModel& model);
/// -Ω⁻¹ + (Γ-Γ⋆)ᵀ Σ_X (Γ-Γ⋆) + Ω⋆⁻¹, exactly symmetric.
DenseMatrix population_grad_omega(const GroundTruth& truth, const JointModel& model);

}  // namespace cape
