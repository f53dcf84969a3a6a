#include <catch2/catch.hpp>

#include "lrc/lrc.hpp"
#include "oracles.hpp"

using lrc::Index;
using lrc::Matrix;
using lrc::Vector;

TEST_CASE("oversampling_size rounds OS * k * (m + n - k)", "[problems]") {
  CHECK(lrc::oversampling_size(1000, 1000, 40, 3.0) == 235200);
  CHECK(lrc::oversampling_size(50, 50, 2, 3.0) == 588);
  // OS = 1 with full rank covers the whole matrix
  CHECK(lrc::oversampling_size(20, 20, 20, 1.0) == 400);

  CHECK_THROWS_AS(lrc::oversampling_size(10, 10, 5, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(lrc::oversampling_size(10, 10, 2, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(lrc::oversampling_size(10, 10, 11, 1.0), std::invalid_argument);
}

TEST_CASE("gen_random_lowrank draws seeded Gaussian factors", "[problems]") {
  auto [l1, r1] = lrc::gen_random_lowrank(40, 30, 3, 9);
  auto [l2, r2] = lrc::gen_random_lowrank(40, 30, 3, 9);
  CHECK((l1 - l2).norm() == 0.0);
  CHECK((r1 - r2).norm() == 0.0);
  auto [l3, r3] = lrc::gen_random_lowrank(40, 30, 3, 10);
  CHECK((l1 - l3).norm() != 0.0);

  CHECK_THROWS_AS(lrc::gen_random_lowrank(10, 10, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(lrc::gen_random_lowrank(10, 10, 11, 1), std::invalid_argument);

  // |A|_F concentrates around n sqrt(k) for square matrices
  const Index n = 1000, k = 40;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto [al, ar] = lrc::gen_random_lowrank(n, n, k, seed);
    const Matrix gl = al.transpose() * al;
    const Matrix gr = ar.transpose() * ar;
    const double norm_a = std::sqrt(gl.cwiseProduct(gr).sum());
    const double ratio = norm_a / (n * std::sqrt(double(k)));
    CHECK(ratio >= 0.9);
    CHECK(ratio <= 1.1);
  }
}

TEST_CASE("gen_noisy_values scales the perturbation exactly", "[problems]") {
  auto [al, ar] = lrc::gen_random_lowrank(25, 20, 2, 500);
  lrc::SamplingSet omega = lrc::sample_uniform(25, 20, 120, 501);

  SECTION("zero noise returns the clean samples") {
    auto clean = lrc::apply_proj_omega_lowrank(al, ar, omega);
    auto vals = lrc::gen_noisy_values(al, ar, omega, 0.0, 502);
    CHECK(vals == clean);
  }

  SECTION("|values - A_Omega| = eps |A_Omega| holds exactly") {
    auto clean = lrc::apply_proj_omega_lowrank(al, ar, omega);
    for (double eps : {1e-2, 1e-6, 3.7}) {
      auto vals = lrc::gen_noisy_values(al, ar, omega, eps, 503);
      double diff2 = 0.0, base2 = 0.0;
      for (std::size_t p = 0; p < vals.size(); ++p) {
        diff2 += (vals[p] - clean[p]) * (vals[p] - clean[p]);
        base2 += clean[p] * clean[p];
      }
      // recovering the perturbation by subtraction reintroduces rounding at
      // the base-value scale, so the check is exact only to ~1e-16/eps
      CHECK(std::sqrt(diff2) == Approx(eps * std::sqrt(base2)).epsilon(1e-8));
    }
  }

  SECTION("negative noise level is rejected") {
    CHECK_THROWS_AS(lrc::gen_noisy_values(al, ar, omega, -1e-3, 504), std::invalid_argument);
  }
}

TEST_CASE("gen_bivariate discretizes the kernel on a unit grid", "[problems]") {
  const Matrix a = lrc::gen_bivariate(200, 1.0);

  SECTION("diagonal and symmetry") {
    for (Index i = 0; i < 200; i += 37) CHECK(a(i, i) == 1.0);
    CHECK((a - a.transpose()).norm() == 0.0);
    CHECK(a.minCoeff() > 0.0);
  }

  SECTION("singular values decay and give a small numerical rank") {
    const Vector sv = oracle::singular_values(a);
    for (Index i = 1; i < sv.size(); ++i) CHECK(sv[i] <= sv[i - 1] * (1 + 1e-12));
    const Index k_eps = lrc::epsilon_rank(sv, 1e-6 * sv[0]);
    CHECK(k_eps >= 5);
    CHECK(k_eps <= 30);
  }

  SECTION("argument validation") {
    CHECK_THROWS_AS(lrc::gen_bivariate(1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(lrc::gen_bivariate(10, 0.0), std::invalid_argument);
  }
}

TEST_CASE("epsilon_rank counts singular values above the threshold", "[problems]") {
  Vector s(4);
  s << 3.0, 2.0, 1.0, 1e-9;
  CHECK(lrc::epsilon_rank(s, 0.5) == 3);
  CHECK(lrc::epsilon_rank(s, 0.0) == 4);  // exact rank
  CHECK(lrc::epsilon_rank(s, 3.0) == 0);

  Vector bad(3);
  bad << 1.0, 2.0, 0.5;
  CHECK_THROWS_AS(lrc::epsilon_rank(bad, 0.1), std::invalid_argument);
  Vector neg(2);
  neg << 1.0, -0.1;
  CHECK_THROWS_AS(lrc::epsilon_rank(neg, 0.1), std::invalid_argument);
}

TEST_CASE("homotopy_init extends the rank by one orthogonal direction", "[problems]") {
  auto x_prev = lrc::random_fixed_rank(10, 8, 2, 600);
  auto x = lrc::homotopy_init(x_prev, 601);

  SECTION("shape, spectrum duplication and orthogonality") {
    CHECK(x.rank() == 3);
    CHECK(x.sigma()[2] == x_prev.sigma()[1]);
    CHECK((x.basis_u().transpose() * x.basis_u() - Matrix::Identity(3, 3)).norm() <= 1e-12);
    CHECK((x.basis_v().transpose() * x.basis_v() - Matrix::Identity(3, 3)).norm() <= 1e-12);
  }

  SECTION("the previous point is preserved as a sub-block") {
    const Matrix projected = x_prev.basis_u() * x_prev.basis_u().transpose() * x.dense() *
                             x_prev.basis_v() * x_prev.basis_v().transpose();
    CHECK((projected - x_prev.dense()).norm() <= 1e-10 * x_prev.frobenius_norm());
  }

  SECTION("deterministic in the seed") {
    auto y = lrc::homotopy_init(x_prev, 601);
    CHECK((x.dense() - y.dense()).norm() == 0.0);
  }

  SECTION("cannot extend past the ambient dimensions") {
    auto square = lrc::random_fixed_rank(3, 8, 3, 602);
    CHECK_THROWS_AS(lrc::homotopy_init(square, 603), std::invalid_argument);
  }
}

TEST_CASE("problem generators assemble consistent instances", "[problems]") {
  SECTION("random low-rank problem with noise and test set") {
    lrc::CompletionProblem p = lrc::make_random_problem(60, 50, 3, 3.0, 700, 1e-3, true);
    CHECK(p.m == 60);
    CHECK(p.n == 50);
    CHECK(p.data.size() == lrc::oversampling_size(60, 50, 3, 3.0));
    REQUIRE(p.test_set.has_value());
    CHECK(p.test_set->size() == p.data.size());
    REQUIRE(p.truth_factors.has_value());
    CHECK(p.noise_level == 1e-3);

    lrc::CompletionProblem q = lrc::make_random_problem(60, 50, 3, 3.0, 700, 1e-3, true);
    CHECK(std::equal(p.data.values().begin(), p.data.values().end(), q.data.values().begin()));
  }

  SECTION("bivariate problem gathers the dense truth") {
    lrc::CompletionProblem p = lrc::make_bivariate_problem(50, 1.0, 800, 4, 701);
    REQUIRE(p.truth_dense.has_value());
    const auto rows = p.data.entry_rows();
    const auto cols = p.data.entry_cols();
    for (Index i = 0; i < p.data.size(); i += 97)
      CHECK(p.data.values()[i] == (*p.truth_dense)(rows[i], cols[i]));
    REQUIRE(p.test_set.has_value());
    CHECK(p.test_set->pattern_id() != p.data.pattern_id());
  }
}
