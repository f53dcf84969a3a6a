#pragma once

#include <cmath>
#include <optional>

#include "lrc/cg_solver.hpp"

namespace lrc {

/// |X - A|_F / |A|_F against a factored ground truth A = AL * AR^T, without
/// forming any m x n matrix. The difference is written as the low-rank
/// product [U S, -AL] [V, AR]^T and its norm taken from the QR cores; unlike
/// the expansion |X|^2 + |A|^2 - 2<X, A>, this stays accurate when the error
/// is far below |A| (no cancellation of O(|A|^2) terms).
inline double metric_relative_error(const FixedRankMatrix& x, const Matrix& al,
                                    const Matrix& ar) {
  if (al.rows() != x.rows() || ar.rows() != x.cols() || al.cols() != ar.cols())
    throw std::invalid_argument("metric_relative_error: truth factor dimensions mismatch");
  const Matrix gl = al.transpose() * al;
  const Matrix gr = ar.transpose() * ar;
  const double a2 = gl.cwiseProduct(gr).sum();  // Tr(GL * GR) = |A|_F^2
  if (a2 == 0.0) throw std::invalid_argument("metric_relative_error: zero ground truth");

  const Index k = x.rank(), ka = al.cols();
  Matrix left(x.rows(), k + ka), right(x.cols(), k + ka);
  left << x.basis_u() * x.sigma().asDiagonal(), -al;
  right << x.basis_v(), ar;
  auto [ql, rl] = detail::thin_qr(left);
  auto [qr_, rr] = detail::thin_qr(right);
  return (rl * rr.transpose()).norm() / std::sqrt(a2);
}

/// Same metric against a dense ground truth (direct difference; intended
/// for desk-scale problems).
inline double metric_relative_error(const FixedRankMatrix& x, const Matrix& a) {
  if (a.rows() != x.rows() || a.cols() != x.cols())
    throw std::invalid_argument("metric_relative_error: dimension mismatch");
  const double an = a.norm();
  if (an == 0.0) throw std::invalid_argument("metric_relative_error: zero ground truth");
  return (x.dense() - a).norm() / an;
}

/// |P_Omega^perp (X - A)|_F / |A|_F: the part of the error invisible to the
/// sampling set. Needs the (noiseless) ground truth; complements the
/// on-Omega split of error_split.
inline double metric_offsample_error(const FixedRankMatrix& x, const Matrix& al,
                                     const Matrix& ar, const SamplingSet& omega) {
  const double rel = metric_relative_error(x, al, ar);
  const Matrix gl = al.transpose() * al;
  const Matrix gr = ar.transpose() * ar;
  const double a_norm = std::sqrt(gl.cwiseProduct(gr).sum());

  const std::vector<double> xv =
      apply_proj_omega_lowrank(x.basis_u() * x.sigma().asDiagonal(), x.basis_v(), omega);
  const std::vector<double> av = apply_proj_omega_lowrank(al, ar, omega);
  double on2 = 0.0;
  for (std::size_t p = 0; p < xv.size(); ++p) {
    const double d = xv[p] - av[p];
    on2 += d * d;
  }
  const double total2 = rel * rel * a_norm * a_norm;
  return std::sqrt(std::max(0.0, total2 - on2)) / a_norm;
}

struct ResidualMetric {
  double value = 0.0;
  /// Set when |P_Omega(A)| = 0 and the value is an absolute norm instead.
  bool absolute = false;
};

/// |P_Omega(X - A)| / |P_Omega(A)| on the given sampled data.
inline ResidualMetric metric_relative_residual(const FixedRankMatrix& x,
                                               const SamplingSet& data) {
  std::vector<double> xv;
  std::span<const double> xvals;
  if (x.has_sampled_values(data)) {
    xvals = x.sampled_values(data);
  } else {
    xv = apply_proj_omega_lowrank(x.basis_u() * x.sigma().asDiagonal(), x.basis_v(), data);
    xvals = xv;
  }
  const auto av = data.values();
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < xvals.size(); ++p) {
    const double d = xvals[p] - av[p];
    num += d * d;
    den += av[p] * av[p];
  }
  if (den == 0.0) return {std::sqrt(num), true};
  return {std::sqrt(num / den), false};
}

/// Generalization error on a held-out sampling set Gamma.
inline ResidualMetric metric_test_error(const FixedRankMatrix& x, const SamplingSet& gamma) {
  return metric_relative_residual(x, gamma);
}

/// Asymptotic convergence factor, transient excluded:
/// rho = (res(i_end) / res(10))^(1 / (i_end - 10)). Returns 1.0 for a run
/// that exhausted its iteration budget, nothing for traces shorter than 12
/// iterations.
inline std::optional<double> convergence_factor(const SolverTrace& trace) {
  if (trace.records.size() < 12) return std::nullopt;
  if (trace.termination == Termination::MaxIters) return 1.0;
  const IterationRecord* ref = nullptr;
  for (const auto& rec : trace.records)
    if (rec.iter == 10) {
      ref = &rec;
      break;
    }
  if (ref == nullptr) return std::nullopt;
  const IterationRecord& last = trace.records.back();
  if (!(ref->rel_residual > 0.0) || last.iter <= ref->iter) return std::nullopt;
  return std::pow(last.rel_residual / ref->rel_residual,
                  1.0 / static_cast<double>(last.iter - ref->iter));
}

/// Mean PR+ beta after the transient (CG iterations beyond the first 20).
inline std::optional<double> mean_beta_late(const SolverTrace& trace, int transient = 20) {
  double sum = 0.0;
  int count = 0, cg_seen = 0;
  for (const auto& rec : trace.records) {
    if (rec.phase != 1) continue;
    ++cg_seen;
    if (cg_seen <= transient || !(rec.step > 0.0)) continue;
    sum += rec.beta;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

/// Fraction of line searches accepted without backtracking.
inline std::optional<double> armijo_zero_fraction(const SolverTrace& trace) {
  int total = 0, zero = 0;
  for (const auto& rec : trace.records) {
    if (rec.phase != 1 || !(rec.step > 0.0)) continue;
    ++total;
    if (rec.backtracks == 0) ++zero;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(zero) / total;
}

}  // namespace lrc
