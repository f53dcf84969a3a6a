#pragma once

#include <algorithm>
#include <cmath>

#include "lrc/manifold.hpp"

namespace lrc {

/// Everything the cost family needs: the observed data A_Omega and the
/// regularization weight mu. mu = 0 selects the plain least-squares
/// objective f; mu in (0, 1) selects the regularized objective
/// g(X) = f(X) + mu^2 (|X^+|_F^2 + |X|_F^2).
class ObjectiveContext {
 public:
  explicit ObjectiveContext(const SamplingSet& data, double mu = 0.0)
      : data_(&data), mu_(mu) {
    if (mu < 0.0 || (mu != 0.0 && mu >= 1.0))
      throw std::invalid_argument("ObjectiveContext: mu must be 0 or in (0, 1)");
  }

  const SamplingSet& data() const { return *data_; }
  double mu() const { return mu_; }
  bool regularized() const { return mu_ != 0.0; }

 private:
  const SamplingSet* data_;
  double mu_;
};

/// f(X) = 1/2 |P_Omega(X - A)|_F^2, from the cached sampled values of X.
inline double cost_f(const FixedRankMatrix& x, const ObjectiveContext& ctx) {
  const auto xv = x.sampled_values(ctx.data());
  const auto av = ctx.data().values();
  double s = 0.0;
  for (std::size_t p = 0; p < xv.size(); ++p) {
    const double d = xv[p] - av[p];
    s += d * d;
  }
  return 0.5 * s;
}

inline double regularizer_value(const FixedRankMatrix& x, double mu) {
  if (mu == 0.0) return 0.0;
  double s = 0.0;
  for (Index i = 0; i < x.rank(); ++i) {
    const double si = x.sigma()[i];
    s += si * si + 1.0 / (si * si);
  }
  return mu * mu * s;
}

/// g(X) = f(X) + mu^2 sum_i (sigma_i^2 + sigma_i^-2); equals f when mu = 0.
inline double cost_g(const FixedRankMatrix& x, const ObjectiveContext& ctx) {
  return cost_f(x, ctx) + regularizer_value(x, ctx.mu());
}

/// The objective the solver minimizes under this context.
inline double objective_value(const FixedRankMatrix& x, const ObjectiveContext& ctx) {
  return ctx.regularized() ? cost_g(x, ctx) : cost_f(x, ctx);
}

/// Riemannian gradient at X given the residual R = X_Omega - A_Omega:
/// the tangent projection of the Euclidean gradient. Under the regularized
/// objective the extra term 2 mu^2 U (S - S^-3) V^T is diagonal in the
/// M-block.
inline TangentVector gradient_from_residual(const FixedRankMatrix& x, const SamplingSet& r,
                                            const ObjectiveContext& ctx) {
  TangentVector g = project_sparse_to_tangent(x, r);
  if (!ctx.regularized()) return g;
  Matrix m = g.coeff_m();
  const double mu2 = ctx.mu() * ctx.mu();
  for (Index i = 0; i < x.rank(); ++i) {
    const double si = x.sigma()[i];
    m(i, i) += 2.0 * mu2 * (si - 1.0 / (si * si * si));
  }
  return TangentVector(x, std::move(m), g.coeff_up(), g.coeff_vp());
}

inline TangentVector riemannian_gradient(const FixedRankMatrix& x, const ObjectiveContext& ctx) {
  return gradient_from_residual(x, residual_on_omega(x, ctx.data()), ctx);
}

/// P_Omega(xi) as a sparse matrix on Omega, using the factored form
/// xi = [U M + Up, U] [V, Vp]^T.
inline SamplingSet sample_tangent_on_omega(const FixedRankMatrix& x, const TangentVector& xi,
                                           const SamplingSet& omega) {
  detail::require_base(x, xi);
  const Index k = x.rank();
  Matrix y1(x.rows(), 2 * k), y2(x.cols(), 2 * k);
  y1.leftCols(k) = x.basis_u() * xi.coeff_m() + xi.coeff_up();
  y1.rightCols(k) = x.basis_u();
  y2.leftCols(k) = x.basis_v();
  y2.rightCols(k) = xi.coeff_vp();
  return omega.with_values(apply_proj_omega_lowrank(y1, y2, omega));
}

/// Riemannian Hessian of f applied to xi (mu = 0 only):
///   M-block  = U^T P_Omega(xi) V
///   Up-block = P_U^perp (P_Omega(xi) V + P_Omega(X-A) Vp S^-1)
///   Vp-block = P_V^perp (P_Omega(xi)^T U + P_Omega(X-A)^T Up S^-1)
/// Linear and self-adjoint on the tangent space.
inline TangentVector hessian_apply(const FixedRankMatrix& x, const TangentVector& xi,
                                   const ObjectiveContext& ctx) {
  if (ctx.regularized())
    throw std::invalid_argument("hessian_apply: only the unregularized objective is supported");
  detail::require_base(x, xi);

  const SamplingSet s_xi = sample_tangent_on_omega(x, xi, ctx.data());
  const SamplingSet r = residual_on_omega(x, ctx.data());
  const Vector sinv = x.sigma().cwiseInverse();

  Matrix sv = sparse_times_dense(s_xi, x.basis_v());
  Matrix m_h = x.basis_u().transpose() * sv;
  sv += sparse_times_dense(r, xi.coeff_vp()) * sinv.asDiagonal();
  Matrix up = sv - x.basis_u() * (x.basis_u().transpose() * sv);

  Matrix su = transpose_times_dense(s_xi, x.basis_u());
  su += transpose_times_dense(r, xi.coeff_up()) * sinv.asDiagonal();
  Matrix vp = su - x.basis_v() * (x.basis_v().transpose() * su);
  return TangentVector(x, std::move(m_h), std::move(up), std::move(vp));
}

/// Splits the sampled residual P_Omega(X - A) into its tangent-space norm e1
/// and normal-space norm e2 (Pythagoras: e1^2 + e2^2 = |R|_F^2).
inline std::pair<double, double> error_split(const FixedRankMatrix& x,
                                             const ObjectiveContext& ctx) {
  const SamplingSet r = residual_on_omega(x, ctx.data());
  const double e1 = norm(project_sparse_to_tangent(x, r));
  const double total = r.value_norm();
  const double e2 = std::sqrt(std::max(0.0, total * total - e1 * e1));
  return {e1, e2};
}

}  // namespace lrc
