#pragma once

// Ground-truth designs and Gaussian data for the synthetic experiments.

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include "json.hpp"

#include "cape/matrix.hpp"
#include "cape/model.hpp"

namespace cape {

struct IdentityDesign {
  std::size_t dim = 0;
};
/// Tridiagonal: `diag` on the diagonal, `off` on the first off-diagonals.
struct BandDesign {
  std::size_t dim = 0;
  double diag = 1.0;
  double off = 0.0;
};
/// `block` repeated down the diagonal; a trailing partial block keeps the
/// leading corner of the pattern.
struct BlockDiagDesign {
  std::size_t dim = 0;
  DenseMatrix block;
};
using CovarianceDesign = std::variant<IdentityDesign, BandDesign, BlockDiagDesign>;

std::size_t design_dim(const CovarianceDesign& design);
std::string describe_design(const CovarianceDesign& design);
nlohmann::json design_to_json(const CovarianceDesign& design);
/// Inverse of design_to_json; ConfigError on unknown kinds or keys.
CovarianceDesign design_from_json(const nlohmann::json& j);

/// The pattern matrix. Throws InvalidArgument, quoting the smallest
/// eigenvalue, when the pattern is not positive definite.
DenseMatrix make_covariance(const CovarianceDesign& design);

/// Exactly s_star nonzeros at positions drawn uniformly without replacement,
/// with standard normal values.
DenseMatrix make_sparse_gamma(std::size_t d, std::size_t m, std::size_t s_star, std::uint64_t seed);

struct SyntheticInstance {
  GroundTruth truth;
  ProblemData data;
  DenseMatrix noise;
  std::uint64_t seed = 0;
};

/// Seeds of the independent X and E streams.
struct SubstreamSeeds {
  std::uint64_t x = 0;
  std::uint64_t e = 0;

  static SubstreamSeeds from(std::uint64_t seed);
};

/// Holds the Cholesky factors of Σ_X and Ω⋆⁻¹ so repeated draws from one
/// design factor once.
class InstanceSampler {
 public:
  InstanceSampler(const CovarianceDesign& sigma_design, const CovarianceDesign& omega_design, DenseMatrix gamma);

  const GroundTruth& truth() const noexcept { return truth_; }
  SyntheticInstance sample(std::size_t n, std::uint64_t seed) const;
  SyntheticInstance sample(std::size_t n, SubstreamSeeds seeds) const;

 private:
  GroundTruth truth_;
  DenseMatrix sigma_factor_;
  DenseMatrix noise_factor_;
};

/// Rows of X ~ N(0, Σ_X), rows of E ~ N(0, Ω⋆⁻¹), Y = XΓ + E.
SyntheticInstance sample_instance(const CovarianceDesign& sigma_design, const CovarianceDesign& omega_design,
                                  const DenseMatrix& gamma, std::size_t n, std::uint64_t seed);

}  // namespace cape
