#include <cmath>

#include "doctest.h"

#include "cape/errors.hpp"
#include "cape/rng.hpp"
#include "cape/synth.hpp"
#include "oracles.hpp"

using namespace cape;

TEST_CASE("make_covariance patterns") {
  CHECK(make_covariance(BandDesign{3, 0.5, 0.15}) ==
        DenseMatrix::from_rows({{0.5, 0.15, 0}, {0.15, 0.5, 0.15}, {0, 0.15, 0.5}}));
  CHECK(make_covariance(IdentityDesign{4}) == DenseMatrix::identity(4));
  const auto block = make_covariance(BlockDiagDesign{5, DenseMatrix::from_rows({{1, 0.2}, {0.2, 1}})});
  CHECK(block == DenseMatrix::from_rows({{1, 0.2, 0, 0, 0},
                                         {0.2, 1, 0, 0, 0},
                                         {0, 0, 1, 0.2, 0},
                                         {0, 0, 0.2, 1, 0},
                                         {0, 0, 0, 0, 1}}));
  try {
    make_covariance(BandDesign{10, 1.0, 0.9});
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("smallest eigenvalue") != std::string::npos);
  }
  CHECK_THROWS_AS(make_covariance(IdentityDesign{0}), InvalidArgument);
}

TEST_CASE("every published experiment design is positive definite") {
  CHECK_NOTHROW(make_covariance(BandDesign{100, 0.5, 0.15}));
  CHECK_NOTHROW(make_covariance(BandDesign{100, 0.6, 0.18}));
  CHECK_NOTHROW(make_covariance(BlockDiagDesign{50, DenseMatrix::from_rows({{1, 0.2}, {0.2, 1}})}));
  CHECK_NOTHROW(make_covariance(BandDesign{100, 1.0, 0.4}));
  for (std::size_t m : {50u, 56u, 66u, 76u})
    CHECK_NOTHROW(make_covariance(BlockDiagDesign{m, DenseMatrix::from_rows({{1, 0.3}, {0.3, 1}})}));
}

TEST_CASE("design JSON round trip") {
  const CovarianceDesign designs[] = {IdentityDesign{3}, BandDesign{4, 1.0, 0.4},
                                      BlockDiagDesign{6, DenseMatrix::from_rows({{1, 0.3}, {0.3, 1}})}};
  for (const auto& d : designs) CHECK(make_covariance(design_from_json(design_to_json(d))) == make_covariance(d));
  CHECK_THROWS_AS(design_from_json({{"kind", "band"}, {"dim", 3}, {"diag", 1.0}}), ConfigError);
  CHECK_THROWS_AS(design_from_json({{"kind", "weird"}, {"dim", 3}}), ConfigError);
  CHECK_THROWS_AS(design_from_json({{"kind", "identity"}, {"dim", 3}, {"extra", 1}}), ConfigError);
}

TEST_CASE("make_sparse_gamma") {
  CHECK(count_nonzeros(make_sparse_gamma(10, 10, 0, 1)) == 0);
  CHECK(count_nonzeros(make_sparse_gamma(4, 5, 20, 1)) == 20);
  CHECK(count_nonzeros(make_sparse_gamma(100, 100, 200, 7)) == 200);
  CHECK(make_sparse_gamma(30, 20, 50, 3) == make_sparse_gamma(30, 20, 50, 3));
  CHECK_FALSE(make_sparse_gamma(30, 20, 50, 3) == make_sparse_gamma(30, 20, 50, 4));
  CHECK_THROWS_AS(make_sparse_gamma(3, 3, 10, 1), InvalidArgument);

  // Support positions are roughly uniform: each cell of a 4x5 grid with
  // s=1 should be hit about 1/20 of the time.
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 4000; ++seed) hits[oracle::support(make_sparse_gamma(4, 5, 1, seed))[0]]++;
  for (int h : hits) CHECK(std::abs(h - 200) < 60);
}

TEST_CASE("sample_instance") {
  const auto gamma = make_sparse_gamma(6, 4, 8, 2);
  const auto inst = sample_instance(IdentityDesign{6}, BandDesign{4, 1.0, 0.4}, gamma, 50, 9);
  CHECK(oracle::loop_frobenius(inst.data.y - oracle::loop_matmul(inst.data.x, gamma) - inst.noise) <= 1e-12);
  CHECK(inst.truth.gamma_star == gamma);
  CHECK(inst.truth.omega_star == make_covariance(BandDesign{4, 1.0, 0.4}));

  const auto again = sample_instance(IdentityDesign{6}, BandDesign{4, 1.0, 0.4}, gamma, 50, 9);
  CHECK(again.data.x == inst.data.x);
  CHECK(again.data.y == inst.data.y);

  // Independent substreams: changing the E seed leaves X untouched.
  const InstanceSampler sampler(IdentityDesign{6}, BandDesign{4, 1.0, 0.4}, gamma);
  auto seeds = SubstreamSeeds::from(9);
  const auto a = sampler.sample(50, seeds);
  seeds.e = rng::derive_seed(seeds.e, {99});
  const auto b = sampler.sample(50, seeds);
  CHECK(a.data.x == b.data.x);
  CHECK_FALSE(a.noise == b.noise);
  CHECK(a.data.x == inst.data.x);

  CHECK_THROWS_AS(sample_instance(IdentityDesign{5}, BandDesign{4, 1.0, 0.4}, gamma, 50, 9), ShapeError);
  CHECK_THROWS_AS(sample_instance(IdentityDesign{6}, BandDesign{4, 1.0, 0.4}, gamma, 0, 9), InvalidArgument);
}

TEST_CASE("sample covariance of X approaches the identity") {
  const std::size_t n = 100000;
  const auto inst = sample_instance(IdentityDesign{4}, IdentityDesign{2}, DenseMatrix(4, 2), n, 3);
  const auto s = oracle::loop_matmul(oracle::loop_transpose(inst.data.x), inst.data.x);
  const double tol = 4.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(s(i, j) / n - (i == j ? 1.0 : 0.0)) < tol);
}

TEST_CASE("sample precision of E matches the band design") {
  const std::size_t n = 100000;
  const auto omega = make_covariance(BandDesign{4, 1.0, 0.4});
  const auto inst = sample_instance(IdentityDesign{1}, BandDesign{4, 1.0, 0.4}, DenseMatrix(1, 4), n, 5);
  auto cov = oracle::loop_matmul(oracle::loop_transpose(inst.noise), inst.noise);
  cov *= 1.0 / static_cast<double>(n);
  const auto prec = oracle::gauss_inverse(cov);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(prec(i, j) - omega(i, j)) < 0.02);
}

TEST_CASE("random streams") {
  rng::Stream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  CHECK(rng::derive_seed(1, {2, 3}) != rng::derive_seed(1, {3, 2}));
  CHECK(rng::derive_seed(1, {2}) == rng::derive_seed(1, {2}));
  CHECK(rng::hash_name("table1") != rng::hash_name("phase"));

  rng::Stream s(7);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.015);
  for (int i = 0; i < 1000; ++i) {
    const double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(s.below(7) < 7);
  }
}
