#pragma once

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <utility>

#include "lrc/cg_solver.hpp"

namespace lrc {

/// Working model X = L * R^T of an alternating-least-squares pass; no
/// orthonormality is maintained, conversion to compact SVD happens only at
/// the hand-off to the manifold solver.
struct FactorPair {
  Matrix l;  // m x k
  Matrix r;  // n x k
};

inline FactorPair random_factor_pair(Index m, Index n, Index k, std::uint64_t seed) {
  auto [l, r] = gen_random_lowrank(m, n, k, seed);
  return {std::move(l), std::move(r)};
}

/// sum_Omega (L R^T - A)^2 + lambda (|L|^2 + |R|^2).
inline double als_objective(const FactorPair& f, const SamplingSet& a, double lambda) {
  const std::vector<double> xv = apply_proj_omega_lowrank(f.l, f.r, a);
  const auto av = a.values();
  double s = 0.0;
  for (std::size_t p = 0; p < xv.size(); ++p) {
    const double d = xv[p] - av[p];
    s += d * d;
  }
  return s + lambda * (f.l.squaredNorm() + f.r.squaredNorm());
}

namespace detail {

/// Solves the independent k x k normal systems of one ALS half-sweep.
/// `groups` enumerates entry indices grouped by the output row; `fixed_row`
/// maps an entry to the row of the fixed factor it multiplies.
template <typename GroupIndex, typename FixedRow, typename Value>
Matrix als_half_sweep(const RowMatrix& fixed, Index out_rows, Index k, double lambda,
                      GroupIndex&& group_of, FixedRow&& fixed_row, Value&& value,
                      std::size_t nnz, bool& ridge_bumped) {
  Matrix out = Matrix::Zero(out_rows, k);
  Matrix gram(k, k);
  Vector rhs(k);
  std::size_t p = 0;
  while (p < nnz) {
    const Index g = group_of(p);
    gram.setZero();
    rhs.setZero();
    std::size_t q = p;
    for (; q < nnz && group_of(q) == g; ++q) {
      const auto row = fixed.row(fixed_row(q));
      gram.noalias() += row.transpose() * row;
      rhs.noalias() += value(q) * row.transpose();
    }
    Matrix lhs = gram;
    lhs.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(lhs);
    Vector w;
    if (llt.info() == Eigen::Success) w = llt.solve(rhs);
    if (llt.info() != Eigen::Success || !w.allFinite()) {
      // deficient pattern (fewer than k samples in this row/column)
      const double bump = 1e-12 * std::max(gram.trace() / static_cast<double>(k), 1.0);
      lhs = gram;
      lhs.diagonal().array() += lambda + bump;
      w = Eigen::LLT<Matrix>(lhs).solve(rhs);
      ridge_bumped = true;
    }
    out.row(g) = w.transpose();
    p = q;
  }
  return out;
}

}  // namespace detail

struct AlsSweepResult {
  FactorPair factors;
  bool ridge_bumped = false;
};

/// One full ALS sweep: exact minimization over R with L fixed, then over L
/// with R fixed. The objective is non-increasing after each half-sweep.
/// Rows or columns with deficient sampling get an automatic tiny ridge.
inline AlsSweepResult als_sweep(const FactorPair& f, const SamplingSet& a, double lambda) {
  if (f.l.rows() != a.rows() || f.r.rows() != a.cols() || f.l.cols() != f.r.cols())
    throw std::invalid_argument("als_sweep: factor dimensions mismatch");
  if (lambda < 0.0) throw std::invalid_argument("als_sweep: ridge must be >= 0");
  const Index k = f.l.cols();
  const auto rows = a.entry_rows();
  const auto cols = a.entry_cols();
  const auto vals = a.values();
  const auto corder = a.column_order();
  const std::size_t nnz = vals.size();
  bool bumped = false;

  // R update: one normal system per column of A, entries in (col, row) order.
  const RowMatrix lfixed = f.l;
  Matrix r_new = detail::als_half_sweep(
      lfixed, a.cols(), k, lambda, [&](std::size_t p) { return Index(cols[corder[p]]); },
      [&](std::size_t p) { return Index(rows[corder[p]]); },
      [&](std::size_t p) { return vals[corder[p]]; }, nnz, bumped);

  // L update: one normal system per row of A, entries in canonical order.
  const RowMatrix rfixed = r_new;
  Matrix l_new = detail::als_half_sweep(
      rfixed, a.rows(), k, lambda, [&](std::size_t p) { return Index(rows[p]); },
      [&](std::size_t p) { return Index(cols[p]); }, [&](std::size_t p) { return vals[p]; }, nnz,
      bumped);

  return {{std::move(l_new), std::move(r_new)}, bumped};
}

inline FixedRankMatrix to_fixed_rank(const FactorPair& f) {
  return FixedRankMatrix::from_factors(f.l, f.r);
}

/// Warm-started solve: `sweeps` ALS passes from a random factor pair, then
/// hand-off to the manifold CG solver. The returned trace concatenates both
/// phases; warm-start records carry phase = 0 and a continuing iteration
/// count.
inline std::pair<FixedRankMatrix, SolverTrace> solve_hybrid(const CompletionProblem& problem,
                                                            int sweeps, const SolverConfig& cfg,
                                                            std::uint64_t seed) {
  if (sweeps < 0) throw std::invalid_argument("solve_hybrid: sweep count must be >= 0");
  const SamplingSet& a = problem.data;
  const double norm_a = a.value_norm();

  FactorPair f = random_factor_pair(problem.m, problem.n, problem.k, seed);
  SolverTrace trace;
  for (int s = 1; s <= sweeps; ++s) {
    const auto tick = std::chrono::steady_clock::now();
    AlsSweepResult step = als_sweep(f, a, 0.0);
    f = std::move(step.factors);
    IterationRecord rec;
    rec.iter = s;
    rec.phase = 0;
    const double misfit = als_objective(f, a, 0.0);
    rec.cost = 0.5 * misfit;
    rec.rel_residual = norm_a > 0.0 ? std::sqrt(misfit) / norm_a : std::sqrt(misfit);
    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - tick)
                      .count();
    trace.records.push_back(rec);
  }

  auto [x, cg_trace] = solve(problem, cfg, to_fixed_rank(f));
  for (IterationRecord rec : cg_trace.records) {
    rec.iter += sweeps;
    trace.records.push_back(rec);
  }
  trace.termination = cg_trace.termination;
  trace.fallback_steps = cg_trace.fallback_steps;
  trace.sigma_bound_violations = cg_trace.sigma_bound_violations;
  trace.c0 = cg_trace.c0;
  return {std::move(x), std::move(trace)};
}

}  // namespace lrc
