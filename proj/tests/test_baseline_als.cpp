#include <catch2/catch.hpp>

#include <Eigen/Cholesky>

#include "lrc/lrc.hpp"
#include "oracles.hpp"

using lrc::FactorPair;
using lrc::Index;
using lrc::Matrix;
using lrc::SamplingSet;

namespace {

// dense reference for one half-sweep: per-column ridge least squares
Matrix dense_right_update(const Matrix& l, const SamplingSet& a, double lambda) {
  const Matrix ad = oracle::densify(a);
  Matrix mask = Matrix::Zero(a.rows(), a.cols());
  for (Index p = 0; p < a.size(); ++p) mask(a.entry_rows()[p], a.entry_cols()[p]) = 1.0;
  const Index k = l.cols();
  Matrix r = Matrix::Zero(a.cols(), k);
  for (Index j = 0; j < a.cols(); ++j) {
    Matrix gram = lambda * Matrix::Identity(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (Index i = 0; i < a.rows(); ++i) {
      if (mask(i, j) == 0.0) continue;
      gram += l.row(i).transpose() * l.row(i);
      rhs += ad(i, j) * l.row(i).transpose();
    }
    r.row(j) = Eigen::LLT<Matrix>(gram).solve(rhs).transpose();
  }
  return r;
}

}  // namespace

TEST_CASE("als_sweep minimizes each factor exactly", "[baseline_als]") {
  SECTION("fully sampled rank-1 data is interpolated after one sweep") {
    lrc::Rng rng(400);
    Matrix l_true = oracle::random_matrix(rng, 8, 1);
    Matrix r_true = oracle::random_matrix(rng, 6, 1);
    SamplingSet omega = lrc::sample_uniform(8, 6, 48, 401);
    SamplingSet a = omega.with_values(lrc::apply_proj_omega_lowrank(l_true, r_true, omega));

    FactorPair f{l_true, oracle::random_matrix(rng, 6, 1)};
    auto swept = lrc::als_sweep(f, a, 0.0);
    CHECK(lrc::als_objective(swept.factors, a, 0.0) <= 1e-20);
  }

  SECTION("zero data zeroes the right factor in the first half-sweep") {
    lrc::Rng rng(402);
    SamplingSet a = lrc::sample_uniform(7, 5, 35, 403);  // values all zero
    FactorPair f{oracle::random_matrix(rng, 7, 2), oracle::random_matrix(rng, 5, 2)};
    auto swept = lrc::als_sweep(f, a, 0.0);
    CHECK(swept.factors.r.norm() == 0.0);
  }

  SECTION("random instance matches the dense normal-equation oracle") {
    lrc::CompletionProblem p = lrc::make_random_problem(30, 25, 2, 4.0, 404);
    lrc::Rng rng(405);
    FactorPair f{oracle::random_matrix(rng, 30, 2), oracle::random_matrix(rng, 25, 2)};

    const double before = lrc::als_objective(f, p.data, 0.0);
    auto swept = lrc::als_sweep(f, p.data, 0.0);

    const Matrix r_expected = dense_right_update(f.l, p.data, 0.0);
    CHECK((swept.factors.r - r_expected).norm() <= 1e-10 * (1.0 + r_expected.norm()));

    // objective non-increasing across each half-sweep
    const double mid = lrc::als_objective({f.l, swept.factors.r}, p.data, 0.0);
    const double after = lrc::als_objective(swept.factors, p.data, 0.0);
    CHECK(mid <= before * (1 + 1e-12));
    CHECK(after <= mid * (1 + 1e-12));
  }

  SECTION("deficient columns trigger the automatic ridge") {
    // column 4 has a single sample; the k x k normal system is singular
    SamplingSet a(6, 5, {0, 1, 2, 0, 3, 1, 4, 2, 5, 0},
                  {0, 0, 0, 1, 1, 2, 2, 3, 3, 4},
                  std::vector<double>(10, 1.0));
    lrc::Rng rng(406);
    FactorPair f{oracle::random_matrix(rng, 6, 2), oracle::random_matrix(rng, 5, 2)};
    auto swept = lrc::als_sweep(f, a, 0.0);
    CHECK(swept.ridge_bumped);
    CHECK(swept.factors.l.allFinite());
    CHECK(swept.factors.r.allFinite());
  }

  SECTION("dimension and argument validation") {
    SamplingSet a = lrc::sample_uniform(6, 5, 30, 407);
    lrc::Rng rng(408);
    FactorPair bad{oracle::random_matrix(rng, 7, 2), oracle::random_matrix(rng, 5, 2)};
    CHECK_THROWS_AS(lrc::als_sweep(bad, a, 0.0), std::invalid_argument);
    FactorPair ok{oracle::random_matrix(rng, 6, 2), oracle::random_matrix(rng, 5, 2)};
    CHECK_THROWS_AS(lrc::als_sweep(ok, a, -1.0), std::invalid_argument);
  }
}

TEST_CASE("factor pairs convert losslessly to fixed-rank form", "[baseline_als]") {
  lrc::Rng rng(410);
  FactorPair f{oracle::random_matrix(rng, 12, 3), oracle::random_matrix(rng, 9, 3)};
  auto x = lrc::to_fixed_rank(f);
  const Matrix prod = f.l * f.r.transpose();
  CHECK((x.dense() - prod).norm() <= 1e-12 * prod.norm());
  CHECK(x.rank() == 3);
}

TEST_CASE("solve_hybrid warm-starts the manifold solver", "[baseline_als]") {
  lrc::CompletionProblem problem = lrc::make_random_problem(150, 150, 3, 4.0, 420);
  lrc::SolverConfig cfg;

  SECTION("zero sweeps equals plain CG from the converted random start") {
    auto [xh, th] = lrc::solve_hybrid(problem, 0, cfg, 421);
    FactorPair f0 = lrc::random_factor_pair(150, 150, 3, 421);
    auto [xp, tp] = lrc::solve(problem, cfg, lrc::to_fixed_rank(f0));
    REQUIRE(th.records.size() == tp.records.size());
    for (std::size_t i = 0; i < th.records.size(); ++i) {
      CHECK(th.records[i].cost == tp.records[i].cost);
      CHECK(th.records[i].step == tp.records[i].step);
    }
  }

  SECTION("phases are marked and concatenated") {
    auto [x, trace] = lrc::solve_hybrid(problem, 5, cfg, 422);
    REQUIRE(trace.records.size() > 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(trace.records[i].phase == 0);
      CHECK(trace.records[i].iter == i + 1);
    }
    CHECK(trace.records[5].phase == 1);
    CHECK(trace.records[5].iter == 6);
    // warm start respects the ALS monotone-decrease property
    for (int i = 1; i < 5; ++i)
      CHECK(trace.records[i].cost <= trace.records[i - 1].cost * (1 + 1e-12));
    CHECK(trace.termination == lrc::Termination::ResidualTol);
    CHECK(trace.last().rel_residual <= 1e-12);
  }

  SECTION("negative sweep counts are rejected") {
    CHECK_THROWS_AS(lrc::solve_hybrid(problem, -1, cfg, 423), std::invalid_argument);
  }
}
