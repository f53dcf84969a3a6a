#pragma once

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "lrc/common.hpp"
#include "lrc/sampling.hpp"

namespace lrc {

namespace detail {

/// One step of symmetric first-order orthonormalization,
/// Q <- Q (3 I - Q^T Q) / 2, contracting |Q^T Q - I| quadratically. The
/// per-step rounding of the retraction otherwise accumulates linearly over
/// thousands of iterations and eventually breaks the orthonormality
/// contract of FixedRankMatrix.
inline void polish_orthonormal(Matrix& q) {
  Matrix gram = q.transpose() * q;
  gram *= -0.5;
  gram.diagonal().array() += 1.5;
  q = q * gram;
}

/// Fix the sign of each singular pair so the largest-magnitude component of
/// the left vector is positive. Makes factorizations reproducible without
/// changing the represented matrix.
inline void normalize_svd_signs(Matrix& u, Matrix& v) {
  for (Index c = 0; c < u.cols(); ++c) {
    Index imax = 0;
    u.col(c).cwiseAbs().maxCoeff(&imax);
    if (u(imax, c) < 0.0) {
      u.col(c) = -u.col(c);
      v.col(c) = -v.col(c);
    }
  }
}

/// Thin Householder QR with a non-negative diagonal of R.
inline std::pair<Matrix, Matrix> thin_qr(const Matrix& a) {
  const Index m = a.rows(), k = a.cols();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(m, k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) = -r.row(i);
      q.col(i) = -q.col(i);
    }
  }
  return {std::move(q), std::move(r)};
}

}  // namespace detail

/// A rank-k matrix X = U * diag(sigma) * V^T in compact-SVD form. U and V
/// have orthonormal columns, sigma is positive and non-increasing. The
/// sampled values X_Omega for one sampling pattern may be cached alongside;
/// the cache is filled at construction time and never mutated.
class FixedRankMatrix {
 public:
  FixedRankMatrix(Matrix u, Vector sigma, Matrix v)
      : u_(std::move(u)), sigma_(std::move(sigma)), v_(std::move(v)),
        id_(detail::next_object_id()) {
    validate();
  }

  /// Compact SVD of the product L * R^T (both with k columns). Singular
  /// values are clamped at machine epsilon so the result stays on the
  /// rank-k manifold even for a numerically deficient product.
  static FixedRankMatrix from_factors(const Matrix& l, const Matrix& r) {
    if (l.cols() != r.cols()) throw std::invalid_argument("from_factors: rank mismatch");
    if (l.cols() == 0) throw std::invalid_argument("from_factors: rank must be positive");
    auto [ql, rl] = detail::thin_qr(l);
    auto [qr, rr] = detail::thin_qr(r);
    Matrix core = rl * rr.transpose();
    Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix u = ql * svd.matrixU();
    Matrix v = qr * svd.matrixV();
    Vector s = svd.singularValues().array() + std::numeric_limits<double>::epsilon();
    detail::normalize_svd_signs(u, v);
    return FixedRankMatrix(std::move(u), std::move(s), std::move(v));
  }

  /// Best rank-k approximation of a dense matrix.
  static FixedRankMatrix from_dense(const Matrix& a, Index k) {
    if (k <= 0 || k > std::min(a.rows(), a.cols()))
      throw std::invalid_argument("from_dense: invalid rank");
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix u = svd.matrixU().leftCols(k);
    Matrix v = svd.matrixV().leftCols(k);
    Vector s = svd.singularValues().head(k).array() + std::numeric_limits<double>::epsilon();
    detail::normalize_svd_signs(u, v);
    return FixedRankMatrix(std::move(u), std::move(s), std::move(v));
  }

  Index rows() const { return u_.rows(); }
  Index cols() const { return v_.rows(); }
  Index rank() const { return sigma_.size(); }

  const Matrix& basis_u() const { return u_; }
  const Matrix& basis_v() const { return v_; }
  const Vector& sigma() const { return sigma_; }

  /// Identity token; tangent vectors remember the point they live at.
  std::uint64_t id() const { return id_; }

  Matrix dense() const { return u_ * sigma_.asDiagonal() * v_.transpose(); }

  double frobenius_norm() const { return sigma_.norm(); }

  /// Copy of this point carrying X_Omega for the given pattern; the copy
  /// keeps the same identity token since it is the same point.
  FixedRankMatrix with_sampled_values(const SamplingSet& omega) const {
    FixedRankMatrix out(*this);
    Matrix us = u_ * sigma_.asDiagonal();
    out.omega_values_ = apply_proj_omega_lowrank(us, v_, omega);
    out.omega_pattern_ = omega.pattern_id();
    return out;
  }

  bool has_sampled_values(const SamplingSet& omega) const {
    return omega_pattern_ == omega.pattern_id();
  }

  std::span<const double> sampled_values(const SamplingSet& omega) const {
    if (!has_sampled_values(omega))
      throw std::invalid_argument("FixedRankMatrix: no cached values for this sampling pattern");
    return omega_values_;
  }

 private:
  void validate() const {
    const Index k = sigma_.size();
    if (k == 0 || u_.cols() != k || v_.cols() != k)
      throw std::invalid_argument("FixedRankMatrix: inconsistent factor shapes");
    if (u_.rows() < k || v_.rows() < k)
      throw std::invalid_argument("FixedRankMatrix: rank exceeds dimensions");
    const double tol = 1e-12 * static_cast<double>(k);
    const Matrix iu = u_.transpose() * u_ - Matrix::Identity(k, k);
    const Matrix iv = v_.transpose() * v_ - Matrix::Identity(k, k);
    if (iu.norm() > tol || iv.norm() > tol)
      throw NumericalError("FixedRankMatrix: factors are not orthonormal");
    for (Index i = 0; i < k; ++i) {
      if (!(sigma_[i] > 0.0)) throw NumericalError("FixedRankMatrix: singular values must be positive");
      if (i > 0 && sigma_[i] > sigma_[i - 1])
        throw NumericalError("FixedRankMatrix: singular values must be non-increasing");
    }
  }

  Matrix u_;
  Vector sigma_;
  Matrix v_;
  std::uint64_t id_;
  std::vector<double> omega_values_;
  std::uint64_t omega_pattern_ = 0;
};

/// Tangent vector xi = U*M*V^T + Up*V^T + U*Vp^T at a base point X = U S V^T,
/// stored by its coefficient blocks. Up and Vp are orthogonal to the base
/// factors (U^T Up = 0, V^T Vp = 0); all constructors in this library
/// produce blocks with that property.
class TangentVector {
 public:
  TangentVector(const FixedRankMatrix& base, Matrix m, Matrix up, Matrix vp)
      : m_(std::move(m)), up_(std::move(up)), vp_(std::move(vp)), base_id_(base.id()) {
    const Index k = base.rank();
    if (m_.rows() != k || m_.cols() != k || up_.rows() != base.rows() || up_.cols() != k ||
        vp_.rows() != base.cols() || vp_.cols() != k)
      throw std::invalid_argument("TangentVector: block shapes do not match base point");
  }

  static TangentVector zero(const FixedRankMatrix& base) {
    const Index k = base.rank();
    return TangentVector(base, Matrix::Zero(k, k), Matrix::Zero(base.rows(), k),
                         Matrix::Zero(base.cols(), k));
  }

  const Matrix& coeff_m() const { return m_; }
  const Matrix& coeff_up() const { return up_; }
  const Matrix& coeff_vp() const { return vp_; }
  std::uint64_t base_id() const { return base_id_; }

  bool based_at(const FixedRankMatrix& x) const { return base_id_ == x.id(); }

 private:
  Matrix m_, up_, vp_;
  std::uint64_t base_id_;
};

namespace detail {
inline void require_same_base(const TangentVector& a, const TangentVector& b) {
  if (a.base_id() != b.base_id())
    throw std::invalid_argument("tangent vectors live at different base points");
}
inline void require_base(const FixedRankMatrix& x, const TangentVector& v) {
  if (!v.based_at(x)) throw std::invalid_argument("tangent vector not based at this point");
}
}  // namespace detail

/// Riemannian metric: the ambient trace inner product, which reduces to the
/// blockwise Frobenius inner products because the three blocks are mutually
/// orthogonal in the ambient space.
inline double inner(const TangentVector& a, const TangentVector& b) {
  detail::require_same_base(a, b);
  return a.coeff_m().cwiseProduct(b.coeff_m()).sum() +
         a.coeff_up().cwiseProduct(b.coeff_up()).sum() +
         a.coeff_vp().cwiseProduct(b.coeff_vp()).sum();
}

inline double norm(const TangentVector& a) { return std::sqrt(inner(a, a)); }

/// a * x + y, blockwise.
inline TangentVector tangent_axpy(double a, const TangentVector& x, const TangentVector& y,
                                  const FixedRankMatrix& base) {
  detail::require_same_base(x, y);
  detail::require_base(base, x);
  return TangentVector(base, a * x.coeff_m() + y.coeff_m(), a * x.coeff_up() + y.coeff_up(),
                       a * x.coeff_vp() + y.coeff_vp());
}

inline TangentVector tangent_scale(double a, const TangentVector& x,
                                   const FixedRankMatrix& base) {
  detail::require_base(base, x);
  return TangentVector(base, a * x.coeff_m(), a * x.coeff_up(), a * x.coeff_vp());
}

/// Embeds a tangent vector as a dense ambient matrix. Intended for small
/// problems and for validation; the solver never forms this product.
inline Matrix tangent_dense(const FixedRankMatrix& x, const TangentVector& xi) {
  detail::require_base(x, xi);
  return x.basis_u() * xi.coeff_m() * x.basis_v().transpose() +
         xi.coeff_up() * x.basis_v().transpose() +
         x.basis_u() * xi.coeff_vp().transpose();
}

/// Orthogonal projection of a dense matrix onto the tangent space at X.
inline TangentVector project_dense_to_tangent(const FixedRankMatrix& x, const Matrix& z) {
  if (z.rows() != x.rows() || z.cols() != x.cols())
    throw std::invalid_argument("project_dense_to_tangent: dimension mismatch");
  Matrix zv = z * x.basis_v();
  Matrix zu = z.transpose() * x.basis_u();
  Matrix m = x.basis_u().transpose() * zv;
  Matrix up = zv - x.basis_u() * m;
  Matrix vp = zu - x.basis_v() * m.transpose();
  return TangentVector(x, std::move(m), std::move(up), std::move(vp));
}

/// Same projection for a sparse matrix supported on Omega, at
/// O((m+n) k^2 + |Omega| k) cost.
inline TangentVector project_sparse_to_tangent(const FixedRankMatrix& x, const SamplingSet& r) {
  if (r.rows() != x.rows() || r.cols() != x.cols())
    throw std::invalid_argument("project_sparse_to_tangent: dimension mismatch");
  Matrix rv = sparse_times_dense(r, x.basis_v());       // R * V
  Matrix ru = transpose_times_dense(r, x.basis_u());    // R^T * U
  Matrix m = x.basis_u().transpose() * rv;
  Matrix up = rv - x.basis_u() * m;
  Matrix vp = ru - x.basis_v() * m.transpose();
  return TangentVector(x, std::move(m), std::move(up), std::move(vp));
}

/// Sparse residual X_Omega - A_Omega on A's pattern. X must carry cached
/// sampled values for that pattern.
inline SamplingSet residual_on_omega(const FixedRankMatrix& x, const SamplingSet& a) {
  if (x.rows() != a.rows() || x.cols() != a.cols())
    throw std::invalid_argument("residual_on_omega: dimension mismatch");
  const auto xv = x.sampled_values(a);
  const auto av = a.values();
  std::vector<double> out(xv.size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = xv[p] - av[p];
  return a.with_values(std::move(out));
}

/// Metric-projection retraction: the nearest rank-k matrix to X + xi,
/// computed from a compact QR of the tangent blocks and the SVD of a small
/// 2k x 2k core. Machine epsilon is added to the retained singular values
/// so the result stays on the manifold even if the projection is deficient.
namespace detail {

/// Factors a block as Up = U * C + Q * R with Q an orthonormal basis
/// orthogonal to U. The fast path is a thin QR of Up alone (C = 0), valid
/// while Up is numerically well separated from ran(U). When Up is
/// (near-)rank-deficient, the QR completion columns may overlap ran(U), so
/// the fallback takes a Householder QR of the stacked [U, Up]: its trailing
/// columns are orthogonal to U by the global orthogonality of Q, at the
/// price of a 2k-column factorization.
struct ComplementSplit {
  Matrix q, r, c;
};

inline ComplementSplit split_off_complement(const Matrix& basis, const Matrix& block) {
  const Index m = basis.rows(), k = basis.cols();
  {
    auto [q, r] = thin_qr(block);
    const double overlap = (basis.transpose() * q).norm();
    if (overlap <= 1e-12 * std::sqrt(static_cast<double>(k)))
      return {std::move(q), std::move(r), Matrix::Zero(k, k)};
  }
  Matrix stacked(m, 2 * k);
  stacked << basis, block;
  Eigen::HouseholderQR<Matrix> qr(stacked);
  Matrix q = qr.householderQ() * Matrix::Identity(m, 2 * k);
  Matrix rfull = qr.matrixQR().topRows(2 * k).triangularView<Eigen::Upper>();
  // basis = Q1 R11, block = Q1 R12 + Q2 R22 = basis (R11^-1 R12) + Q2 R22
  Matrix c = rfull.topLeftCorner(k, k)
                 .triangularView<Eigen::Upper>()
                 .solve(rfull.topRightCorner(k, k));
  return {q.rightCols(k), rfull.bottomRightCorner(k, k), std::move(c)};
}

}  // namespace detail

inline FixedRankMatrix retract(const FixedRankMatrix& x, const TangentVector& xi) {
  detail::require_base(x, xi);
  const Index k = x.rank();
  auto [qu, ru, cu] = detail::split_off_complement(x.basis_u(), xi.coeff_up());
  auto [qv, rv, cv] = detail::split_off_complement(x.basis_v(), xi.coeff_vp());

  // X + xi = [U Qu] [[S + M + Cu + Cv^T, Rv^T], [Ru, 0]] [V Qv]^T exactly
  Matrix s = Matrix::Zero(2 * k, 2 * k);
  s.topLeftCorner(k, k) = xi.coeff_m() + cu + cv.transpose();
  s.topLeftCorner(k, k).diagonal() += x.sigma();
  s.topRightCorner(k, k) = rv.transpose();
  s.bottomLeftCorner(k, k) = ru;

  Eigen::JacobiSVD<Matrix> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector sigma_plus = svd.singularValues().head(k).array() + std::numeric_limits<double>::epsilon();

  Matrix left(x.rows(), 2 * k), right(x.cols(), 2 * k);
  left << x.basis_u(), qu;
  right << x.basis_v(), qv;
  Matrix u_plus = left * svd.matrixU().leftCols(k);
  Matrix v_plus = right * svd.matrixV().leftCols(k);
  detail::polish_orthonormal(u_plus);
  detail::polish_orthonormal(v_plus);
  detail::normalize_svd_signs(u_plus, v_plus);
  return FixedRankMatrix(std::move(u_plus), std::move(sigma_plus), std::move(v_plus));
}

/// Vector transport: orthogonal projection of a tangent vector at `from`
/// onto the tangent space at `to`, evaluated through the factored inner
/// products of the two bases (never forming an m x n matrix).
inline TangentVector transport(const FixedRankMatrix& from, const TangentVector& nu,
                               const FixedRankMatrix& to) {
  detail::require_base(from, nu);
  if (from.rows() != to.rows() || from.cols() != to.cols() || from.rank() != to.rank())
    throw std::invalid_argument("transport: target point has mismatched shape");

  const Matrix av = from.basis_v().transpose() * to.basis_v();   // V^T V+
  const Matrix au = from.basis_u().transpose() * to.basis_u();   // U^T U+
  const Matrix bv = nu.coeff_vp().transpose() * to.basis_v();    // Vp^T V+
  const Matrix bu = nu.coeff_up().transpose() * to.basis_u();    // Up^T U+

  const Matrix mav = nu.coeff_m() * av;
  const Matrix mtau = nu.coeff_m().transpose() * au;

  Matrix m_plus = au.transpose() * mav + bu.transpose() * av + au.transpose() * bv;
  Matrix up_plus = from.basis_u() * (mav + bv) + nu.coeff_up() * av;
  Matrix vp_plus = from.basis_v() * (mtau + bu) + nu.coeff_vp() * au;
  up_plus -= to.basis_u() * (to.basis_u().transpose() * up_plus);
  vp_plus -= to.basis_v() * (to.basis_v().transpose() * vp_plus);
  return TangentVector(to, std::move(m_plus), std::move(up_plus), std::move(vp_plus));
}

/// Second-order retraction: a closed-form map agreeing with the exponential
/// map to second order, R2(xi) = X + xi + Up S^-1 Vp^T + O(|xi|^3). Unlike
/// the metric projection it can genuinely leave the rank-k set for large
/// steps, in which case a RankDeficiencyError is raised.
inline FixedRankMatrix retract_second_order(const FixedRankMatrix& x, const TangentVector& xi) {
  detail::require_base(x, xi);
  const Index k = x.rank();
  const Vector sinv = x.sigma().cwiseInverse();
  const Matrix& m = xi.coeff_m();
  const Matrix sinv_m = sinv.asDiagonal() * m;                   // S^-1 M
  const Matrix mt_sinv = m.transpose() * sinv.asDiagonal();      // M^T S^-T

  Matrix zu_core = 0.5 * m - 0.125 * m * sinv_m;
  zu_core.diagonal() += x.sigma();
  Matrix zu = x.basis_u() * zu_core + xi.coeff_up() * (Matrix::Identity(k, k) - 0.5 * sinv_m);

  Matrix zv_core = 0.5 * mt_sinv - 0.125 * mt_sinv * mt_sinv;
  zv_core.diagonal().array() += 1.0;
  Matrix zv = x.basis_v() * zv_core +
              xi.coeff_vp() * (sinv.asDiagonal() * (Matrix::Identity(k, k) - 0.5 * mt_sinv));

  auto [qu, rzu] = detail::thin_qr(zu);
  auto [qv, rzv] = detail::thin_qr(zv);
  Matrix core = rzu * rzv.transpose();
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (!(s(k - 1) > std::numeric_limits<double>::epsilon() * s(0) * static_cast<double>(2 * k)))
    throw RankDeficiencyError("retract_second_order: step leaves the rank-k manifold");
  Matrix u_plus = qu * svd.matrixU();
  Matrix v_plus = qv * svd.matrixV();
  detail::normalize_svd_signs(u_plus, v_plus);
  return FixedRankMatrix(std::move(u_plus), Vector(s), std::move(v_plus));
}

/// Max relative violation of the orthogonality constraints U^T Up = 0,
/// V^T Vp = 0; diagnostic used by tests and assertions.
inline double tangency_error(const FixedRankMatrix& x, const TangentVector& xi) {
  detail::require_base(x, xi);
  const double up_norm = xi.coeff_up().norm();
  const double vp_norm = xi.coeff_vp().norm();
  const double eu = (x.basis_u().transpose() * xi.coeff_up()).norm();
  const double ev = (x.basis_v().transpose() * xi.coeff_vp()).norm();
  double rel = 0.0;
  if (up_norm > 0.0) rel = std::max(rel, eu / up_norm);
  if (vp_norm > 0.0) rel = std::max(rel, ev / vp_norm);
  return rel;
}

}  // namespace lrc
