#include <cmath>
#include <random>

#include "doctest.h"

#include "cape/errors.hpp"
#include "cape/model.hpp"
#include "cape/synth.hpp"
#include "oracles.hpp"

using namespace cape;

namespace {

struct Instance {
  ProblemData data;
  JointModel model;
};

Instance random_instance(std::mt19937_64& gen, std::size_t n, std::size_t d, std::size_t m) {
  Instance inst;
  inst.data.x = oracle::random_matrix(n, d, gen);
  inst.data.y = oracle::random_matrix(n, m, gen);
  inst.model.gamma = oracle::random_matrix(d, m, gen, 0.3);
  inst.model.omega = oracle::random_spd(m, gen, 1.0);
  return inst;
}

DenseMatrix symmetric_direction(std::size_t m, std::mt19937_64& gen) {
  auto v = oracle::random_matrix(m, m, gen);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) v(j, i) = v(i, j);
  return v;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("sample_loss small cases") {
  std::mt19937_64 gen(1);
  const auto x = oracle::random_matrix(6, 3, gen);
  const auto g = oracle::random_matrix(3, 2, gen);
  const ProblemData exact{x, oracle::loop_matmul(x, g)};
  CHECK(std::abs(sample_loss(exact, {g, DenseMatrix::identity(2)})) < 1e-12);

  const ProblemData scalar{DenseMatrix::from_rows({{1}}), DenseMatrix::from_rows({{2}})};
  CHECK(sample_loss(scalar, {DenseMatrix::from_rows({{0}}), DenseMatrix::from_rows({{1}})}) == doctest::Approx(4.0));

  CHECK_THROWS_AS(sample_loss(scalar, {DenseMatrix(2, 1), DenseMatrix::from_rows({{1}})}), ShapeError);
  CHECK_THROWS_AS(sample_loss(scalar, {DenseMatrix::from_rows({{0}}), DenseMatrix::from_rows({{-1}})}),
                  NotPositiveDefinite);
}

TEST_CASE("sample_loss matches a scalar-loop evaluation") {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 10; ++rep) {
    const auto inst = random_instance(gen, 9, 4, 3);
    const double expected =
        oracle::loop_sample_loss(inst.data.x, inst.data.y, inst.model.gamma, inst.model.omega);
    CHECK(std::abs(sample_loss(inst.data, inst.model) - expected) < 1e-10);
    const GramStats stats(inst.data);
    CHECK(std::abs(stats.loss(inst.model.gamma, inst.model.omega, logdet_pd(inst.model.omega)) - expected) < 1e-10);
  }
}

TEST_CASE("gradients match central finite differences on 50 instances") {
  std::mt19937_64 gen(3);
  int gamma_ok = 0, omega_ok = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = random_instance(gen, 8, 5, 4);
    const auto gg = grad_gamma(inst.data, inst.model);
    const auto go = grad_omega(inst.data, inst.model);
    const auto vg = oracle::random_matrix(5, 4, gen);
    const auto vo = symmetric_direction(4, gen);
    const double fd_g = oracle::directional(
        [&](const DenseMatrix& g) { return oracle::loop_sample_loss(inst.data.x, inst.data.y, g, inst.model.omega); },
        inst.model.gamma, vg);
    const double fd_o = oracle::directional(
        [&](const DenseMatrix& o) { return oracle::loop_sample_loss(inst.data.x, inst.data.y, inst.model.gamma, o); },
        inst.model.omega, vo);
    gamma_ok += rel_gap(oracle::inner(gg, vg), fd_g) < 1e-6;
    omega_ok += rel_gap(oracle::inner(go, vo), fd_o) < 1e-6;
  }
  CHECK(gamma_ok == 50);
  CHECK(omega_ok == 50);
}

TEST_CASE("grad_gamma special cases") {
  std::mt19937_64 gen(4);
  const auto x = oracle::random_matrix(7, 3, gen);
  const auto g = oracle::random_matrix(3, 2, gen);
  const ProblemData exact{x, oracle::loop_matmul(x, g)};
  CHECK(oracle::loop_frobenius(grad_gamma(exact, {g, DenseMatrix::identity(2)})) < 1e-12);

  // Ω = I: plain least-squares gradient (2/n) Xᵀ(XΓ - Y).
  const auto inst = random_instance(gen, 7, 3, 2);
  const auto ls = oracle::loop_matmul(oracle::loop_transpose(inst.data.x),
                                      oracle::loop_matmul(inst.data.x, inst.model.gamma) - inst.data.y);
  const auto got = grad_gamma(inst.data, {inst.model.gamma, DenseMatrix::identity(2)});
  for (std::size_t i = 0; i < ls.size(); ++i) CHECK(got.values()[i] == doctest::Approx(2.0 / 7.0 * ls.values()[i]));
}

TEST_CASE("grad_omega special cases") {
  std::mt19937_64 gen(5);
  const auto x = oracle::random_matrix(6, 3, gen);
  const auto g = oracle::random_matrix(3, 3, gen);
  const ProblemData exact{x, oracle::loop_matmul(x, g)};
  const auto go = grad_omega(exact, {g, DenseMatrix::identity(3)});
  CHECK(oracle::loop_frobenius(go + DenseMatrix::identity(3)) < 1e-12);

  // Stationary in Ω at the inverse residual moment.
  const auto inst = random_instance(gen, 40, 3, 4);
  const auto s = residual_moment(inst.data, inst.model.gamma);
  const auto st = grad_omega(inst.data, {inst.model.gamma, oracle::gauss_inverse(s)});
  CHECK(oracle::loop_frobenius(st) <= 1e-8);
  const auto any = grad_omega(inst.data, inst.model);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(any(i, j) == any(j, i));
}

TEST_CASE("both gradients vanish at the least-squares fit and inverse residual moment") {
  std::mt19937_64 gen(6);
  const auto inst = random_instance(gen, 30, 4, 3);
  const auto xt = oracle::loop_transpose(inst.data.x);
  const auto ls = oracle::loop_matmul(oracle::gauss_inverse(oracle::loop_matmul(xt, inst.data.x)),
                                      oracle::loop_matmul(xt, inst.data.y));
  const auto omega = oracle::gauss_inverse(residual_moment(inst.data, ls));
  const JointModel at{ls, symmetrize(omega)};
  CHECK(oracle::loop_frobenius(grad_gamma(inst.data, at)) < 1e-10);
  CHECK(oracle::loop_frobenius(grad_omega(inst.data, at)) < 1e-8);
}

TEST_CASE("observable gradient form equals the truth-and-noise form") {
  // Y - XΓ = X(Γ⋆ - Γ) + E, so -(2/n)Xᵀ(Y-XΓ)Ω = (2/n)XᵀX(Γ-Γ⋆)Ω - (2/n)XᵀEΩ.
  const auto gamma = make_sparse_gamma(5, 3, 6, 10);
  const auto inst = sample_instance(IdentityDesign{5}, BandDesign{3, 1.0, 0.3}, gamma, 50, 77);
  std::mt19937_64 gen(7);
  const JointModel at{oracle::random_matrix(5, 3, gen), oracle::random_spd(3, gen, 1.0)};
  const auto xt = oracle::loop_transpose(inst.data.x);
  const auto diff = at.gamma - gamma;
  auto paper = oracle::loop_matmul(oracle::loop_matmul(oracle::loop_matmul(xt, inst.data.x), diff), at.omega);
  paper -= oracle::loop_matmul(oracle::loop_matmul(xt, inst.noise), at.omega);
  paper *= 2.0 / 50.0;
  CHECK(oracle::loop_frobenius(grad_gamma(inst.data, at) - paper) < 1e-10);
}

TEST_CASE("bi-convexity: midpoint convexity per block") {
  std::mt19937_64 gen(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(gen, 10, 3, 3);
    const auto g2 = oracle::random_matrix(3, 3, gen);
    auto mid_g = inst.model.gamma + g2;
    mid_g *= 0.5;
    const double fa = sample_loss(inst.data, {inst.model.gamma, inst.model.omega});
    const double fb = sample_loss(inst.data, {g2, inst.model.omega});
    CHECK(sample_loss(inst.data, {mid_g, inst.model.omega}) <= 0.5 * (fa + fb) + 1e-10);

    const auto o2 = oracle::random_spd(3, gen, 0.2);
    auto mid_o = inst.model.omega + o2;
    mid_o *= 0.5;
    const double ga = sample_loss(inst.data, {inst.model.gamma, inst.model.omega});
    const double gb = sample_loss(inst.data, {inst.model.gamma, o2});
    CHECK(sample_loss(inst.data, {inst.model.gamma, mid_o}) <= 0.5 * (ga + gb) + 1e-10);
  }
}

TEST_CASE("population loss and gradients") {
  const GroundTruth truth{make_sparse_gamma(3, 2, 3, 4), make_covariance(BandDesign{2, 1.0, 0.4}),
                          make_covariance(BandDesign{3, 1.0, 0.3})};
  const JointModel at_truth{truth.gamma_star, truth.omega_star};
  double logdet = 0.0;
  for (double ev : oracle::jacobi_eigenvalues(truth.omega_star)) logdet += std::log(ev);
  CHECK(population_loss(truth, at_truth) == doctest::Approx(-logdet + 2.0).epsilon(1e-12));
  CHECK(oracle::loop_frobenius(population_grad_gamma(truth, at_truth)) < 1e-12);
  CHECK(oracle::loop_frobenius(population_grad_omega(truth, at_truth)) < 1e-12);

  std::mt19937_64 gen(9);
  const JointModel p{oracle::random_matrix(3, 2, gen), oracle::random_spd(2, gen, 1.0)};
  const auto vg = oracle::random_matrix(3, 2, gen);
  const auto vo = symmetric_direction(2, gen);
  const double fd_g = oracle::directional(
      [&](const DenseMatrix& g) { return population_loss(truth, {g, p.omega}); }, p.gamma, vg);
  const double fd_o = oracle::directional(
      [&](const DenseMatrix& o) { return population_loss(truth, {p.gamma, o}); }, p.omega, vo);
  CHECK(rel_gap(oracle::inner(population_grad_gamma(truth, p), vg), fd_g) < 1e-6);
  CHECK(rel_gap(oracle::inner(population_grad_omega(truth, p), vo), fd_o) < 1e-6);
}

TEST_CASE("Monte Carlo sample loss approximates the population loss") {
  const auto gamma = make_sparse_gamma(3, 2, 3, 12);
  const CovarianceDesign sigma = BandDesign{3, 1.0, 0.3};
  const CovarianceDesign omega = BandDesign{2, 1.0, 0.4};
  const auto inst = sample_instance(sigma, omega, gamma, 100000, 2024);
  std::mt19937_64 gen(10);
  const JointModel p{gamma + oracle::random_matrix(3, 2, gen, 0.2), oracle::random_spd(2, gen, 1.0)};

  // Per-row quadratic forms give the Monte Carlo standard error.
  const auto r = inst.data.y - oracle::loop_matmul(inst.data.x, p.gamma);
  double sum = 0.0, sum2 = 0.0;
  const std::size_t n = r.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double q = 0.0;
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) q += r(i, a) * p.omega(a, b) * r(i, b);
    sum += q;
    sum2 += q * q;
  }
  const double mean = sum / static_cast<double>(n);
  const double se = std::sqrt((sum2 / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
  const double truth_loss = population_loss(inst.truth, p);
  CHECK(std::abs(sample_loss(inst.data, p) - truth_loss) <= 3.0 * se);
}

TEST_CASE("GramStats agrees with the direct forms") {
  std::mt19937_64 gen(12);
  const auto inst = random_instance(gen, 15, 4, 3);
  const GramStats stats(inst.data);
  CHECK(stats.n() == 15);
  CHECK(oracle::loop_frobenius(stats.grad_gamma(inst.model) - grad_gamma(inst.data, inst.model)) < 1e-12);
  const auto inv = inverse_pd(inst.model.omega);
  CHECK(oracle::loop_frobenius(stats.grad_omega(inst.model.gamma, inv) - grad_omega(inst.data, inst.model)) < 1e-12);
  CHECK(oracle::loop_frobenius(stats.residual_moment(inst.model.gamma) -
                               residual_moment(inst.data, inst.model.gamma)) < 1e-12);
}

TEST_CASE("ProblemData validation and row slices") {
  CHECK_THROWS_AS((ProblemData{DenseMatrix(3, 2), DenseMatrix(4, 2)}.validate()), ShapeError);
  CHECK_THROWS_AS((ProblemData{DenseMatrix(0, 2), DenseMatrix(0, 2)}.validate()), ShapeError);
  const ProblemData d{DenseMatrix::from_rows({{1}, {2}, {3}}), DenseMatrix::from_rows({{4}, {5}, {6}})};
  const auto s = d.rows(1, 2);
  CHECK(s.n() == 2);
  CHECK(s.x(0, 0) == 2);
  CHECK(s.y(1, 0) == 6);
}
