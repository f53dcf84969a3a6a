#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "lrc/manifold.hpp"
#include "lrc/rng.hpp"

namespace lrc {

/// One completion instance: observed entries, target rank, and whatever
/// side information the generator kept (held-out test set, ground truth,
/// noise level) for computing error metrics.
struct CompletionProblem {
  Index m, n, k;
  SamplingSet data;  // A_Omega
  std::optional<SamplingSet> test_set;
  std::optional<std::pair<Matrix, Matrix>> truth_factors;  // A = AL * AR^T
  std::optional<Matrix> truth_dense;
  std::optional<double> noise_level;

  CompletionProblem(Index m_, Index n_, Index k_, SamplingSet data_)
      : m(m_), n(n_), k(k_), data(std::move(data_)) {
    if (k < 1) throw std::invalid_argument("CompletionProblem: rank must be >= 1");
    if (data.rows() != m || data.cols() != n)
      throw std::invalid_argument("CompletionProblem: sampling set dimension mismatch");
  }

  bool has_truth() const { return truth_factors.has_value() || truth_dense.has_value(); }
};

/// |Omega| for an oversampling factor OS: round(OS * k * (m + n - k)),
/// OS = 1 being the degrees of freedom of a rank-k matrix.
inline Index oversampling_size(Index m, Index n, Index k, double os) {
  if (os < 1.0) throw std::invalid_argument("oversampling_size: OS must be >= 1");
  if (k < 1 || k > std::min(m, n)) throw std::invalid_argument("oversampling_size: invalid rank");
  const double dof = static_cast<double>(k) * static_cast<double>(m + n - k);
  const auto size = static_cast<Index>(std::llround(os * dof));
  if (size > m * n) throw std::invalid_argument("oversampling_size: exceeds matrix size");
  return size;
}

/// Ground-truth factors with i.i.d. standard Gaussian entries; A = AL * AR^T
/// has rank k with probability one.
inline std::pair<Matrix, Matrix> gen_random_lowrank(Index m, Index n, Index k,
                                                    std::uint64_t seed) {
  if (k < 1 || k > std::min(m, n)) throw std::invalid_argument("gen_random_lowrank: invalid rank");
  Rng rng(seed);
  Matrix al(m, k), ar(n, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < m; ++i) al(i, j) = rng.gaussian();
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) ar(i, j) = rng.gaussian();
  return {std::move(al), std::move(ar)};
}

/// Random rank-k starting point, built the same way as the ground truth.
inline FixedRankMatrix random_fixed_rank(Index m, Index n, Index k, std::uint64_t seed) {
  auto [l, r] = gen_random_lowrank(m, n, k, seed);
  return FixedRankMatrix::from_factors(l, r);
}

/// Observed values with multiplicative noise level eps: the Gaussian noise
/// drawn on Omega is rescaled so that |values - A_Omega| = eps * |A_Omega|
/// holds exactly.
inline std::vector<double> gen_noisy_values(const Matrix& al, const Matrix& ar,
                                            const SamplingSet& omega, double eps,
                                            std::uint64_t seed) {
  if (eps < 0.0) throw std::invalid_argument("gen_noisy_values: noise level must be >= 0");
  std::vector<double> base = apply_proj_omega_lowrank(al, ar, omega);
  if (eps == 0.0) return base;
  Rng rng(seed);
  std::vector<double> noise(base.size());
  double base_norm = 0.0, noise_norm = 0.0;
  for (std::size_t p = 0; p < base.size(); ++p) {
    noise[p] = rng.gaussian();
    base_norm += base[p] * base[p];
    noise_norm += noise[p] * noise[p];
  }
  if (noise_norm == 0.0) return base;
  const double scale = eps * std::sqrt(base_norm / noise_norm);
  for (std::size_t p = 0; p < base.size(); ++p) base[p] += scale * noise[p];
  return base;
}

/// Discretization of (x, y) -> 1 / (sigma + |x - y|^2) on a uniform grid of
/// [0, 1]^2; sigma controls how fast the singular values decay.
inline Matrix gen_bivariate(Index n, double sigma) {
  if (n < 2) throw std::invalid_argument("gen_bivariate: need n >= 2");
  if (!(sigma > 0.0)) throw std::invalid_argument("gen_bivariate: sigma must be positive");
  Matrix a(n, n);
  const double h = 1.0 / static_cast<double>(n - 1);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double d = (static_cast<double>(i) - static_cast<double>(j)) * h;
      a(i, j) = 1.0 / (sigma + d * d);
    }
  return a;
}

/// Numerical rank at threshold eps: the number of singular values > eps.
inline Index epsilon_rank(const Vector& singular_values, double eps) {
  Index count = 0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values[i];
    if (s < 0.0) throw std::invalid_argument("epsilon_rank: negative singular value");
    if (i > 0 && s > singular_values[i - 1])
      throw std::invalid_argument("epsilon_rank: sequence must be non-increasing");
    if (s > eps) ++count;
  }
  return count;
}

/// Rank continuation: extend a converged rank-(k-1) point to rank k by
/// appending random unit directions orthogonal to its column spaces and
/// duplicating the smallest singular value.
inline FixedRankMatrix homotopy_init(const FixedRankMatrix& x_prev, std::uint64_t seed) {
  const Index k = x_prev.rank() + 1;
  if (x_prev.rows() < k || x_prev.cols() < k)
    throw std::invalid_argument("homotopy_init: dimensions too small to extend rank");
  Rng rng(seed);
  auto fresh_direction = [&rng](const Matrix& basis, Index dim) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vector w(dim);
      for (Index i = 0; i < dim; ++i) w[i] = rng.gaussian();
      // two Gram-Schmidt passes keep the new column orthogonal to working precision
      w -= basis * (basis.transpose() * w);
      w -= basis * (basis.transpose() * w);
      const double nw = w.norm();
      if (nw > 1e-8) return Vector(w / nw);
    }
    throw NumericalError("homotopy_init: could not draw an orthogonal direction");
  };
  Vector u = fresh_direction(x_prev.basis_u(), x_prev.rows());
  Vector v = fresh_direction(x_prev.basis_v(), x_prev.cols());

  Matrix u_new(x_prev.rows(), k), v_new(x_prev.cols(), k);
  u_new << x_prev.basis_u(), u;
  v_new << x_prev.basis_v(), v;
  Vector s_new(k);
  s_new.head(k - 1) = x_prev.sigma();
  s_new[k - 1] = x_prev.sigma()[k - 2];
  return FixedRankMatrix(std::move(u_new), std::move(s_new), std::move(v_new));
}

/// Values of a dense matrix gathered on a sampling pattern.
inline std::vector<double> values_from_dense(const Matrix& a, const SamplingSet& omega) {
  if (a.rows() != omega.rows() || a.cols() != omega.cols())
    throw std::invalid_argument("values_from_dense: dimension mismatch");
  const auto rows = omega.entry_rows();
  const auto cols = omega.entry_cols();
  std::vector<double> out(static_cast<std::size_t>(omega.size()));
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = a(rows[p], cols[p]);
  return out;
}

/// Standard random instance: uniform Omega at the given oversampling factor,
/// Gaussian rank-k ground truth, optional noise and held-out test set.
inline CompletionProblem make_random_problem(Index m, Index n, Index k, double os,
                                             std::uint64_t seed, double noise_eps = 0.0,
                                             bool with_test_set = false) {
  const Index size = oversampling_size(m, n, k, os);
  SamplingSet omega = sample_uniform(m, n, size, Rng::derive(seed, 0));
  auto [al, ar] = gen_random_lowrank(m, n, k, Rng::derive(seed, 1));
  omega = omega.with_values(gen_noisy_values(al, ar, omega, noise_eps, Rng::derive(seed, 2)));

  CompletionProblem problem(m, n, k, std::move(omega));
  if (with_test_set) {
    SamplingSet gamma = sample_uniform(m, n, size, Rng::derive(seed, 3));
    problem.test_set = gamma.with_values(apply_proj_omega_lowrank(al, ar, gamma));
  }
  problem.truth_factors = std::make_pair(std::move(al), std::move(ar));
  if (noise_eps > 0.0) problem.noise_level = noise_eps;
  return problem;
}

/// Completion instance for the bivariate-function matrix; the test set is
/// a second sampling set of the same size, drawn independently of Omega.
inline CompletionProblem make_bivariate_problem(Index n, double sigma, Index sample_size,
                                                Index k, std::uint64_t seed,
                                                bool with_test_set = true) {
  Matrix a = gen_bivariate(n, sigma);
  SamplingSet omega = sample_uniform(n, n, sample_size, Rng::derive(seed, 0));
  omega = omega.with_values(values_from_dense(a, omega));
  CompletionProblem problem(n, n, k, std::move(omega));
  if (with_test_set) {
    SamplingSet gamma = sample_uniform(n, n, sample_size, Rng::derive(seed, 1));
    problem.test_set = gamma.with_values(values_from_dense(a, gamma));
  }
  problem.truth_dense = std::move(a);
  return problem;
}

}  // namespace lrc
