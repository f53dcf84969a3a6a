#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include "lrc/objective.hpp"
#include "lrc/problems.hpp"

namespace lrc {

struct SolverConfig {
  /// Gradient stopping tolerance, relative to |A_Omega|. A secondary guard
  /// behind the residual test, so its default sits below the residual
  /// criterion's floor; it catches critical points whose residual cannot
  /// reach the target (noise, rank mismatch).
  double grad_tol = 1e-14;
  /// Relative-residual target on Omega; the primary stopping criterion.
  double residual_tol = 1e-12;
  int max_iters = 4000;
  /// Relative-change stop for noisy or decaying-spectrum problems; off by
  /// default.
  bool stagnation_enabled = false;
  double stagnation_threshold = 1e-3;
  double armijo_c = 1e-4;
  double armijo_factor = 0.5;
  int max_backtracks = 50;
  /// Reset threshold on the descent alignment <-eta, xi> / (|eta| |xi|).
  double pr_restart_angle = 0.1;
  /// Regularization weight; 0 optimizes f, (0, 1) optimizes g.
  double mu = 0.0;

  void validate() const {
    if (!(grad_tol > 0) || !(residual_tol > 0) || !(stagnation_threshold > 0))
      throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
    if (!(armijo_factor > 0.0 && armijo_factor < 1.0))
      throw std::invalid_argument("SolverConfig: armijo_factor must lie in (0, 1)");
    if (!(armijo_c > 0.0)) throw std::invalid_argument("SolverConfig: armijo_c must be positive");
    if (max_backtracks < 0) throw std::invalid_argument("SolverConfig: max_backtracks must be >= 0");
    if (!(pr_restart_angle >= 0.0 && pr_restart_angle < 1.0))
      throw std::invalid_argument("SolverConfig: pr_restart_angle must lie in [0, 1)");
    if (mu < 0.0 || (mu != 0.0 && mu >= 1.0))
      throw std::invalid_argument("SolverConfig: mu must be 0 or in (0, 1)");
  }
};

enum class Termination {
  GradientTol,
  ResidualTol,
  Stagnation,
  MaxIters,
  LineSearchFailure,
};

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::GradientTol: return "gradient-tol";
    case Termination::ResidualTol: return "residual-tol";
    case Termination::Stagnation: return "stagnation";
    case Termination::MaxIters: return "max-iters";
    case Termination::LineSearchFailure: return "line-search-failure";
  }
  return "unknown";
}

struct IterationRecord {
  int iter = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double rel_residual = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double step = 0.0;
  int backtracks = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  std::int64_t wall_ns = 0;
  int phase = 1;  // 0 = warm-start sweep, 1 = CG iteration
  bool step_fallback = false;
  bool sigma_bounds_ok = true;
};

struct SolverTrace {
  std::vector<IterationRecord> records;
  Termination termination = Termination::MaxIters;
  int fallback_steps = 0;
  int sigma_bound_violations = 0;
  /// C0 = sqrt(g(X1)); singular-value bound constant, set when mu > 0.
  double c0 = 0.0;

  int iterations() const { return static_cast<int>(records.size()); }
  const IterationRecord& last() const { return records.back(); }
};

struct InitialStep {
  double t = 0.0;
  /// Set when <N, N> vanished on Omega and the closed form is undefined.
  bool degenerate = false;
};

/// Exact minimizer of t -> f(X + t eta) restricted to Omega. With
/// N = P_Omega(eta) and R = X_Omega - A_Omega the closed form is
/// t* = <N, -R> / <N, N>. A direction whose sampled values sit at rounding
/// level relative to |eta| is invisible to the sampling and flagged as
/// degenerate instead.
inline InitialStep initial_step(const FixedRankMatrix& x, const TangentVector& eta,
                                const SamplingSet& r) {
  detail::require_base(x, eta);
  const SamplingSet n = sample_tangent_on_omega(x, eta, r);
  const double nn = omega_dot(n.values(), n.values());
  const double floor = 1e-14 * norm(eta) * std::sqrt(static_cast<double>(r.size()));
  if (nn <= floor * floor) return {0.0, true};
  return {-omega_dot(n.values(), r.values()) / nn, false};
}

struct Direction {
  TangentVector eta;
  double beta = 0.0;
  double alpha = 1.0;
  bool reset = false;
};

/// PR+ conjugate direction. Transports the previous gradient and direction
/// to the current tangent space, applies the Polak-Ribiere formula with the
/// beta >= 0 clamp, and falls back to steepest descent whenever the
/// resulting direction is not sufficiently aligned with -grad.
inline Direction pr_plus_direction(const FixedRankMatrix& x_prev, const TangentVector& xi_prev,
                                   const TangentVector& eta_prev, const FixedRankMatrix& x,
                                   const TangentVector& xi, double restart_angle = 0.1) {
  const TangentVector xi_bar = transport(x_prev, xi_prev, x);
  const TangentVector eta_bar = transport(x_prev, eta_prev, x);
  const TangentVector delta = tangent_axpy(-1.0, xi_bar, xi, x);
  const double denom = inner(xi_prev, xi_prev);
  double beta = denom > 0.0 ? std::max(0.0, inner(delta, xi) / denom) : 0.0;

  TangentVector eta = tangent_axpy(beta, eta_bar, tangent_scale(-1.0, xi, x), x);
  const double eta_norm = norm(eta);
  const double xi_norm = norm(xi);
  double alpha = -inner(eta, xi) / (eta_norm * xi_norm);
  bool reset = false;
  if (!(alpha > restart_angle)) {  // also catches NaN from a zero direction
    eta = tangent_scale(-1.0, xi, x);
    beta = 0.0;
    alpha = 1.0;
    reset = true;
  }
  return {std::move(eta), beta, alpha, reset};
}

struct LineSearchResult {
  int backtracks = 0;
  FixedRankMatrix x_next;
  double step = 0.0;
  bool ok = false;
};

/// Armijo backtracking along the retracted curve: finds the smallest
/// m >= 0 with f(X) - f(R_X(c^m t eta)) >= -armijo_c * c^m t <xi, eta>.
/// The accepted point is returned with its X_Omega cache refreshed.
inline LineSearchResult armijo_backtrack(const FixedRankMatrix& x, const TangentVector& eta,
                                         double t_init, const TangentVector& xi,
                                         const ObjectiveContext& ctx, const SolverConfig& cfg,
                                         double f_current) {
  if (!(t_init > 0.0)) throw std::invalid_argument("armijo_backtrack: step must be positive");
  const double slope = inner(xi, eta);  // < 0 for a descent direction
  double t = t_init;
  std::optional<FixedRankMatrix> candidate;
  for (int m = 0; m <= cfg.max_backtracks; ++m) {
    candidate = retract(x, tangent_scale(t, eta, x)).with_sampled_values(ctx.data());
    const double f_cand = objective_value(*candidate, ctx);
    if (f_current - f_cand >= -cfg.armijo_c * t * slope) return {m, std::move(*candidate), t, true};
    t *= cfg.armijo_factor;
  }
  return {cfg.max_backtracks + 1, std::move(*candidate), t / cfg.armijo_factor, false};
}

/// Geometric nonlinear CG on the rank-k manifold. Per iteration: gradient,
/// convergence checks, PR+ direction, exact linearized initial step, Armijo
/// backtracking, metric-projection retraction. Deterministic given the
/// starting point and the problem.
inline std::pair<FixedRankMatrix, SolverTrace> solve(const CompletionProblem& problem,
                                                     const SolverConfig& cfg,
                                                     const FixedRankMatrix& x1) {
  cfg.validate();
  if (x1.rows() != problem.m || x1.cols() != problem.n)
    throw std::invalid_argument("solve: starting point has wrong dimensions");

  const SamplingSet& a = problem.data;
  const ObjectiveContext ctx(a, cfg.mu);
  const double norm_a = a.value_norm();
  const double grad_tol_abs = norm_a > 0.0 ? cfg.grad_tol * norm_a : cfg.grad_tol;

  SolverTrace trace;
  FixedRankMatrix x = x1.with_sampled_values(a);
  if (ctx.regularized()) trace.c0 = std::sqrt(cost_g(x, ctx));

  std::optional<FixedRankMatrix> x_prev;
  std::optional<TangentVector> xi_prev, eta_prev;
  double f_prev = 0.0;
  trace.termination = Termination::MaxIters;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const auto tick = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iter = iter;

    const SamplingSet r = residual_on_omega(x, a);
    const double f_cur = objective_value(x, ctx);
    const TangentVector xi = gradient_from_residual(x, r, ctx);
    rec.cost = f_cur;
    rec.grad_norm = norm(xi);
    rec.rel_residual = norm_a > 0.0 ? r.value_norm() / norm_a : r.value_norm();
    rec.sigma_max = x.sigma()[0];
    rec.sigma_min = x.sigma()[x.rank() - 1];

    if (ctx.regularized()) {
      const double slack = 1.0 + 1e-9;
      rec.sigma_bounds_ok = rec.sigma_max <= (trace.c0 / cfg.mu) * slack &&
                            rec.sigma_min >= (cfg.mu / trace.c0) / slack;
      if (!rec.sigma_bounds_ok) ++trace.sigma_bound_violations;
    }

    auto finish = [&](Termination why) {
      rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - tick)
                        .count();
      trace.records.push_back(rec);
      trace.termination = why;
    };

    if (rec.rel_residual <= cfg.residual_tol) {
      finish(Termination::ResidualTol);
      break;
    }
    if (rec.grad_norm <= grad_tol_abs) {
      finish(Termination::GradientTol);
      break;
    }
    if (cfg.stagnation_enabled && iter >= 2 && f_prev > 0.0 &&
        std::abs(1.0 - std::sqrt(f_cur / f_prev)) < cfg.stagnation_threshold) {
      finish(Termination::Stagnation);
      break;
    }

    TangentVector eta = tangent_scale(-1.0, xi, x);
    rec.alpha = 1.0;
    if (xi_prev) {
      Direction dir = pr_plus_direction(*x_prev, *xi_prev, *eta_prev, x, xi, cfg.pr_restart_angle);
      eta = std::move(dir.eta);
      rec.beta = dir.beta;
      rec.alpha = dir.alpha;
    }

    InitialStep ist = initial_step(x, eta, r);
    if (ist.degenerate || !(ist.t > 0.0)) {
      ist.t = rec.grad_norm;
      rec.step_fallback = true;
      ++trace.fallback_steps;
    }

    LineSearchResult ls = armijo_backtrack(x, eta, ist.t, xi, ctx, cfg, f_cur);
    rec.backtracks = ls.backtracks;
    rec.step = ls.step;
    if (!ls.ok) {
      finish(Termination::LineSearchFailure);
      break;
    }

    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - tick)
                      .count();
    trace.records.push_back(rec);

    x_prev = std::move(x);
    xi_prev = xi;
    eta_prev = std::move(eta);
    f_prev = f_cur;
    x = std::move(ls.x_next);
  }

  return {std::move(x), std::move(trace)};
}

}  // namespace lrc
