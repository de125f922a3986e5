#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include "cape/matrix.hpp"

namespace cape {

struct Unconstrained {};
/// Keep at most `s` nonzero entries (an ℓ0 budget over the vectorised matrix).
struct SparsityCount {
  std::size_t s = 0;
};
/// Euclidean ball of the entrywise ℓ1 norm.
struct L1Ball {
  double radius = 0.0;
};

struct ConstraintSpec {
  std::variant<Unconstrained, SparsityCount, L1Ball> kind;
  /// Ω-shaped blocks: symmetric selection for SparsityCount, and an exact
  /// symmetrisation after an L1Ball projection.
  bool symmetric = false;

  static ConstraintSpec none() { return {}; }
  static ConstraintSpec sparsity(std::size_t s, bool symmetric = false) {
    return {SparsityCount{s}, symmetric};
  }
  static ConstraintSpec l1(double radius, bool symmetric = false) { return {L1Ball{radius}, symmetric}; }

  bool is_sparsity() const noexcept { return std::holds_alternative<SparsityCount>(kind); }
  /// Throws InvalidArgument when the spec cannot apply to a rows x cols matrix.
  void validate_for(std::size_t rows, std::size_t cols) const;
  std::string describe() const;
};

/// Keeps the `s` largest-magnitude entries, zeroing the rest. Ties go to the
/// smaller row-major index.
///
/// In symmetric mode the candidates are the upper-triangle positions; a
/// diagonal entry costs 1 of the budget, an off-diagonal pair costs 2 and its
/// mirror is kept with it. Selection is greedy by magnitude. When exactly one
/// unit of budget remains and the next candidate is off-diagonal, the best
/// remaining diagonal entry is taken instead. The result is exactly symmetric.
DenseMatrix hard_threshold(const DenseMatrix& m, std::size_t s, bool symmetric = false);

/// Euclidean projection of vec(m) onto {‖·‖₁ ≤ radius} by sorting magnitudes
/// and soft-thresholding at the level that meets the radius.
DenseMatrix project_l1_ball(const DenseMatrix& m, double radius);

DenseMatrix apply_constraint(const DenseMatrix& m, const ConstraintSpec& spec);

struct WidthEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
};

/// Monte Carlo estimate of E sup⟨g, x⟩ over s-sparse unit vectors in
/// R^ambient_dim. For each draw the supremum is the ℓ2 norm of the s
/// largest-magnitude coordinates of g. Draw k uses its own sub-seed, so the
/// estimate does not depend on `threads`.
WidthEstimate gaussian_width_sparse(std::size_t ambient_dim, std::size_t s, std::size_t draws,
                                    std::uint64_t seed, std::size_t threads = 1);

}  // namespace cape
