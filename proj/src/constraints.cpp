#include "cape/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/parallel.hpp"
#include "cape/rng.hpp"

namespace cape {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Larger magnitude first; smaller row-major index breaks ties.
struct ByMagnitude {
  const std::vector<double>* magnitude;
  bool operator()(std::size_t a, std::size_t b) const {
    const double ma = (*magnitude)[a];
    const double mb = (*magnitude)[b];
    return ma != mb ? ma > mb : a < b;
  }
};

DenseMatrix threshold_entries(const DenseMatrix& m, std::size_t s) {
  const std::size_t p = m.size();
  if (s >= p) return m;
  std::vector<double> magnitude(p);
  for (std::size_t k = 0; k < p; ++k) magnitude[k] = std::abs(m.values()[k]);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s), order.end(),
                   ByMagnitude{&magnitude});
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t k = 0; k < s; ++k) out.values()[order[k]] = m.values()[order[k]];
  return out;
}

DenseMatrix threshold_symmetric(const DenseMatrix& m, std::size_t s) {
  const std::size_t dim = m.rows();
  // Candidates are upper-triangle positions, indexed row-major in the full matrix.
  std::vector<double> magnitude(m.size(), 0.0);
  std::vector<std::size_t> candidates;
  candidates.reserve(dim * (dim + 1) / 2);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      const std::size_t idx = i * dim + j;
      magnitude[idx] = std::abs(m(i, j));
      candidates.push_back(idx);
    }
  }
  std::sort(candidates.begin(), candidates.end(), ByMagnitude{&magnitude});

  DenseMatrix out(dim, dim);
  std::size_t budget = s;
  for (std::size_t idx : candidates) {
    if (budget == 0) break;
    const std::size_t i = idx / dim;
    const std::size_t j = idx % dim;
    const std::size_t cost = i == j ? 1 : 2;
    if (cost > budget) continue;  // one unit left: only a diagonal entry fits
    out(i, j) = m(i, j);
    out(j, i) = m(i, j);
    budget -= cost;
  }
  return out;
}

}  // namespace

void ConstraintSpec::validate_for(std::size_t rows, std::size_t cols) const {
  std::visit(overloaded{
                 [](const Unconstrained&) {},
                 [&](const SparsityCount& c) {
                   if (c.s < 1 || c.s > rows * cols) {
                     throw InvalidArgument("sparsity budget " + std::to_string(c.s) +
                                           " outside [1, " + std::to_string(rows * cols) + "]");
                   }
                 },
                 [](const L1Ball& c) {
                   if (!(c.radius > 0.0) || !std::isfinite(c.radius)) {
                     throw InvalidArgument("l1 radius must be positive and finite, got " +
                                           csv::format_double(c.radius));
                   }
                 },
             },
             kind);
  if (symmetric && rows != cols) {
    throw InvalidArgument("symmetric constraint on a non-square " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " block");
  }
}

std::string ConstraintSpec::describe() const {
  std::string base = std::visit(
      overloaded{
          [](const Unconstrained&) { return std::string("none"); },
          [](const SparsityCount& c) { return "sparsity(" + std::to_string(c.s) + ")"; },
          [](const L1Ball& c) { return "l1(" + csv::format_double(c.radius) + ")"; },
      },
      kind);
  return symmetric ? base + ",symmetric" : base;
}

DenseMatrix hard_threshold(const DenseMatrix& m, std::size_t s, bool symmetric) {
  require_finite(m, "hard_threshold");
  if (s < 1 || s > m.size()) {
    throw InvalidArgument("hard_threshold: s = " + std::to_string(s) + " outside [1, " +
                          std::to_string(m.size()) + "]");
  }
  if (!symmetric) return threshold_entries(m, s);
  if (!m.is_square() || !is_symmetric(m, 1e-10)) {
    throw InvalidArgument("hard_threshold: symmetric mode needs a symmetric matrix");
  }
  return threshold_symmetric(m, s);
}

DenseMatrix project_l1_ball(const DenseMatrix& m, double radius) {
  require_finite(m, "project_l1_ball");
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("project_l1_ball: radius must be positive, got " + csv::format_double(radius));
  }
  if (l1_norm(m) <= radius) return m;

  std::vector<double> sorted(m.size());
  std::transform(m.values().begin(), m.values().end(), sorted.begin(),
                 [](double v) { return std::abs(v); });
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Largest k with sorted[k-1] > (sum of the top k - radius) / k.
  double cumulative = 0.0;
  double level = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - radius) / static_cast<double>(k + 1);
    if (sorted[k] > candidate) level = candidate;
  }

  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double v = m.values()[k];
    const double shrunk = std::abs(v) - level;
    out.values()[k] = shrunk > 0.0 ? std::copysign(shrunk, v) : 0.0;
  }
  return out;
}

DenseMatrix apply_constraint(const DenseMatrix& m, const ConstraintSpec& spec) {
  spec.validate_for(m.rows(), m.cols());
  return std::visit(overloaded{
                        [&](const Unconstrained&) { return spec.symmetric ? symmetrize(m) : m; },
                        [&](const SparsityCount& c) { return hard_threshold(m, c.s, spec.symmetric); },
                        [&](const L1Ball& c) {
                          DenseMatrix p = project_l1_ball(m, c.radius);
                          return spec.symmetric ? symmetrize(p) : p;
                        },
                    },
                    spec.kind);
}

WidthEstimate gaussian_width_sparse(std::size_t ambient_dim, std::size_t s, std::size_t draws,
                                    std::uint64_t seed, std::size_t threads) {
  if (s < 1 || s > ambient_dim) {
    throw InvalidArgument("gaussian_width_sparse: need 1 <= s <= dim, got s = " + std::to_string(s) +
                          ", dim = " + std::to_string(ambient_dim));
  }
  if (draws < 1) throw InvalidArgument("gaussian_width_sparse: draws must be >= 1");

  std::vector<double> sup(draws);
  parallel_for(draws, threads, [&](std::size_t k) {
    rng::Stream stream(rng::derive_seed(seed, {k}));
    std::vector<double> g(ambient_dim);
    for (double& v : g) v = std::abs(stream.normal());
    std::nth_element(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(s - 1), g.end(),
                     std::greater<>());
    double sq = 0.0;
    for (std::size_t i = 0; i < s; ++i) sq += g[i] * g[i];
    sup[k] = std::sqrt(sq);
  });

  WidthEstimate out;
  out.draws = draws;
  double sum = 0.0;
  for (double v : sup) sum += v;
  out.mean = sum / static_cast<double>(draws);
  if (draws > 1) {
    double ss = 0.0;
    for (double v : sup) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(draws - 1) / static_cast<double>(draws));
  }
  return out;
}

}  // namespace cape
