#include "cape/synth.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/rng.hpp"

namespace cape {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

DenseMatrix pattern(const CovarianceDesign& design) {
  return std::visit(
      overloaded{
          [](const IdentityDesign& d) { return DenseMatrix::identity(d.dim); },
          [](const BandDesign& d) {
            DenseMatrix a(d.dim, d.dim);
            for (std::size_t i = 0; i < d.dim; ++i) {
              a(i, i) = d.diag;
              if (i + 1 < d.dim) {
                a(i, i + 1) = d.off;
                a(i + 1, i) = d.off;
              }
            }
            return a;
          },
          [](const BlockDiagDesign& d) {
            const std::size_t k = d.block.rows();
            if (k == 0 || !d.block.is_square()) {
              throw InvalidArgument("block design needs a non-empty square block, got " + shape_string(d.block));
            }
            DenseMatrix a(d.dim, d.dim);
            for (std::size_t start = 0; start < d.dim; start += k) {
              const std::size_t len = std::min(k, d.dim - start);
              for (std::size_t i = 0; i < len; ++i)
                for (std::size_t j = 0; j < len; ++j) a(start + i, start + j) = d.block(i, j);
            }
            return a;
          },
      },
      design);
}

DenseMatrix standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rng::Stream stream(seed);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = stream.normal();
  return DenseMatrix(rows, cols, std::move(v));
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("design is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("design field '") + key + "': " + e.what());
  }
}

}  // namespace

std::size_t design_dim(const CovarianceDesign& design) {
  return std::visit([](const auto& d) { return d.dim; }, design);
}

std::string describe_design(const CovarianceDesign& design) {
  return std::visit(overloaded{
                        [](const IdentityDesign& d) { return "identity(" + std::to_string(d.dim) + ")"; },
                        [](const BandDesign& d) {
                          return "band(" + std::to_string(d.dim) + ", " + csv::format_double(d.diag) + ", " +
                                 csv::format_double(d.off) + ")";
                        },
                        [](const BlockDiagDesign& d) {
                          return "block(" + std::to_string(d.dim) + ", " + std::to_string(d.block.rows()) +
                                 "x" + std::to_string(d.block.cols()) + ")";
                        },
                    },
                    design);
}

nlohmann::json design_to_json(const CovarianceDesign& design) {
  return std::visit(overloaded{
                        [](const IdentityDesign& d) -> nlohmann::json {
                          return {{"kind", "identity"}, {"dim", d.dim}};
                        },
                        [](const BandDesign& d) -> nlohmann::json {
                          return {{"kind", "band"}, {"dim", d.dim}, {"diag", d.diag}, {"off", d.off}};
                        },
                        [](const BlockDiagDesign& d) -> nlohmann::json {
                          nlohmann::json rows = nlohmann::json::array();
                          for (std::size_t i = 0; i < d.block.rows(); ++i) {
                            const auto r = d.block.row(i);
                            rows.push_back(std::vector<double>(r.begin(), r.end()));
                          }
                          return {{"kind", "block"}, {"dim", d.dim}, {"block", rows}};
                        },
                    },
                    design);
}

CovarianceDesign design_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("design must be a JSON object");
  const auto kind = get_field<std::string>(j, "kind");
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (const auto& [key, value] : j.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
        throw ConfigError("unknown key '" + key + "' in " + kind + " design");
      }
    }
  };
  const auto dim = get_field<std::size_t>(j, "dim");
  if (kind == "identity") {
    allow({"kind", "dim"});
    return IdentityDesign{dim};
  }
  if (kind == "band") {
    allow({"kind", "dim", "diag", "off"});
    return BandDesign{dim, get_field<double>(j, "diag"), get_field<double>(j, "off")};
  }
  if (kind == "block") {
    allow({"kind", "dim", "block"});
    const auto rows = get_field<std::vector<std::vector<double>>>(j, "block");
    const std::size_t k = rows.size();
    std::vector<double> values;
    for (const auto& r : rows) {
      if (r.size() != k) throw ConfigError("block design pattern must be square");
      values.insert(values.end(), r.begin(), r.end());
    }
    return BlockDiagDesign{dim, DenseMatrix(k, k, std::move(values))};
  }
  throw ConfigError("unknown design kind '" + kind + "' (expected identity, band or block)");
}

DenseMatrix make_covariance(const CovarianceDesign& design) {
  if (design_dim(design) == 0) throw InvalidArgument("design dimension must be positive");
  DenseMatrix a = pattern(design);
  require_finite(a, "make_covariance");
  if (!is_symmetric(a, 1e-10)) throw InvalidArgument(describe_design(design) + " is not symmetric");
  try {
    (void)cholesky(a);
  } catch (const NotPositiveDefinite&) {
    const auto eig = eigenvalues_sym(a);
    throw InvalidArgument(describe_design(design) + " is not positive definite (smallest eigenvalue " +
                          csv::format_double(eig.front()) + ")");
  }
  return a;
}

DenseMatrix make_sparse_gamma(std::size_t d, std::size_t m, std::size_t s_star, std::uint64_t seed) {
  const std::size_t p = d * m;
  if (s_star > p) {
    throw InvalidArgument("make_sparse_gamma: s_star = " + std::to_string(s_star) + " exceeds " +
                          std::to_string(p) + " entries");
  }
  rng::Stream stream(seed);
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first s_star slots become the support.
  for (std::size_t k = 0; k < s_star; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(stream.below(p - k));
    std::swap(idx[k], idx[pick]);
  }
  DenseMatrix gamma(d, m);
  for (std::size_t k = 0; k < s_star; ++k) {
    double v = stream.normal();
    while (v == 0.0) v = stream.normal();
    gamma.values()[idx[k]] = v;
  }
  return gamma;
}

SubstreamSeeds SubstreamSeeds::from(std::uint64_t seed) {
  return {rng::derive_seed(seed, {1}), rng::derive_seed(seed, {2})};
}

InstanceSampler::InstanceSampler(const CovarianceDesign& sigma_design, const CovarianceDesign& omega_design,
                                 DenseMatrix gamma) {
  truth_.sigma_x = make_covariance(sigma_design);
  truth_.omega_star = make_covariance(omega_design);
  require_finite(gamma, "gamma_star");
  if (gamma.rows() != truth_.sigma_x.rows() || gamma.cols() != truth_.omega_star.rows()) {
    throw ShapeError("gamma_star is " + shape_string(gamma) + " but the designs are " +
                     std::to_string(truth_.sigma_x.rows()) + " and " + std::to_string(truth_.omega_star.rows()));
  }
  truth_.gamma_star = std::move(gamma);
  sigma_factor_ = cholesky(truth_.sigma_x).transpose();
  noise_factor_ = cholesky(inverse_pd(truth_.omega_star)).transpose();
}

SyntheticInstance InstanceSampler::sample(std::size_t n, std::uint64_t seed) const {
  SyntheticInstance inst = sample(n, SubstreamSeeds::from(seed));
  inst.seed = seed;
  return inst;
}

SyntheticInstance InstanceSampler::sample(std::size_t n, SubstreamSeeds seeds) const {
  if (n == 0) throw InvalidArgument("sample size must be positive");
  SyntheticInstance inst;
  inst.truth = truth_;
  inst.seed = seeds.x;
  // Row z Lᵀ has covariance L Lᵀ.
  DenseMatrix x = matmul(standard_normal(n, sigma_factor_.rows(), seeds.x), sigma_factor_);
  inst.noise = matmul(standard_normal(n, noise_factor_.rows(), seeds.e), noise_factor_);
  DenseMatrix y = matmul(x, truth_.gamma_star);
  y += inst.noise;
  inst.data = {std::move(x), std::move(y)};
  return inst;
}

SyntheticInstance sample_instance(const CovarianceDesign& sigma_design, const CovarianceDesign& omega_design,
                                  const DenseMatrix& gamma, std::size_t n, std::uint64_t seed) {
  return InstanceSampler(sigma_design, omega_design, gamma).sample(n, seed);
}

}  // namespace cape
