#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lrc/common.hpp"
#include "lrc/rng.hpp"

namespace lrc {

/// The sampling set Omega together with one value per sampled entry.
/// Entries are kept sorted lexicographically by (row, col); every reduction
/// over the values walks this canonical order, so norms and inner products
/// are bit-reproducible. Instances are immutable after construction.
///
/// The same container carries the observed data A_Omega, residuals
/// X_Omega - A_Omega, and any other sparse matrix supported on Omega.
class SamplingSet {
 public:
  SamplingSet(Index rows, Index cols, std::vector<std::int32_t> entry_rows,
              std::vector<std::int32_t> entry_cols, std::vector<double> values)
      : m_(rows), n_(cols), rows_(std::move(entry_rows)), cols_(std::move(entry_cols)),
        values_(std::move(values)), pattern_id_(detail::next_object_id()) {
    if (m_ <= 0 || n_ <= 0) throw std::invalid_argument("SamplingSet: dimensions must be positive");
    if (rows_.size() != cols_.size() || rows_.size() != values_.size())
      throw std::invalid_argument("SamplingSet: triplet arrays must have equal length");
    canonicalize();
    build_column_order();
  }

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  Index size() const { return static_cast<Index>(values_.size()); }

  std::span<const std::int32_t> entry_rows() const { return rows_; }
  std::span<const std::int32_t> entry_cols() const { return cols_; }
  std::span<const double> values() const { return values_; }

  /// Entry indices permuted into (col, row) order; used by kernels that
  /// accumulate along columns.
  std::span<const std::int64_t> column_order() const { return col_order_; }

  /// Identity of the index pattern. Shared by all value variants produced
  /// with with_values(), so caches keyed on the pattern stay valid.
  std::uint64_t pattern_id() const { return pattern_id_; }

  /// Same pattern, new values (e.g. a residual supported on Omega).
  SamplingSet with_values(std::vector<double> v) const {
    if (v.size() != values_.size())
      throw std::invalid_argument("with_values: size mismatch with pattern");
    SamplingSet out(*this);
    out.values_ = std::move(v);
    return out;
  }

  /// Frobenius norm of the values, accumulated in canonical entry order.
  double value_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

 private:
  void canonicalize() {
    const std::size_t nnz = rows_.size();
    std::vector<std::int64_t> lin(nnz);
    for (std::size_t p = 0; p < nnz; ++p) {
      if (rows_[p] < 0 || rows_[p] >= m_ || cols_[p] < 0 || cols_[p] >= n_)
        throw std::invalid_argument("SamplingSet: index out of range");
      lin[p] = static_cast<std::int64_t>(rows_[p]) * n_ + cols_[p];
    }
    std::vector<std::size_t> perm(nnz);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return lin[a] < lin[b]; });
    std::vector<std::int32_t> r(nnz), c(nnz);
    std::vector<double> v(nnz);
    for (std::size_t p = 0; p < nnz; ++p) {
      r[p] = rows_[perm[p]];
      c[p] = cols_[perm[p]];
      v[p] = values_[perm[p]];
      if (p > 0 && lin[perm[p]] == lin[perm[p - 1]])
        throw std::invalid_argument("SamplingSet: duplicate index");
    }
    rows_ = std::move(r);
    cols_ = std::move(c);
    values_ = std::move(v);
  }

  void build_column_order() {
    col_order_.resize(rows_.size());
    std::iota(col_order_.begin(), col_order_.end(), std::int64_t{0});
    std::sort(col_order_.begin(), col_order_.end(), [&](std::int64_t a, std::int64_t b) {
      if (cols_[a] != cols_[b]) return cols_[a] < cols_[b];
      return rows_[a] < rows_[b];
    });
  }

  Index m_, n_;
  std::vector<std::int32_t> rows_, cols_;
  std::vector<double> values_;
  std::vector<std::int64_t> col_order_;
  std::uint64_t pattern_id_;
};

/// Draws `size` distinct entries uniformly at random and rejects draws that
/// leave a row or column unsampled, so the coverage contract holds on
/// return. Deterministic in the seed.
inline SamplingSet sample_uniform(Index m, Index n, Index size, std::uint64_t seed,
                                  int max_retries = 100) {
  if (m <= 0 || n <= 0) throw std::invalid_argument("sample_uniform: dimensions must be positive");
  const std::int64_t total = static_cast<std::int64_t>(m) * n;
  if (size < m || size < n || size > total)
    throw std::invalid_argument("sample_uniform: size must satisfy max(m, n) <= size <= m*n");

  Rng rng(seed);
  std::vector<std::int32_t> rows(size), cols(size);
  std::vector<int> row_hits(m), col_hits(n);

  for (int attempt = 0; attempt < max_retries; ++attempt) {
    // Partial Fisher-Yates over the implicit index range [0, total).
    std::unordered_map<std::int64_t, std::int64_t> moved;
    moved.reserve(static_cast<std::size_t>(size) * 2);
    std::fill(row_hits.begin(), row_hits.end(), 0);
    std::fill(col_hits.begin(), col_hits.end(), 0);
    for (Index p = 0; p < size; ++p) {
      const std::int64_t j = p + static_cast<std::int64_t>(rng.below(total - p));
      auto it = moved.find(j);
      const std::int64_t pick = (it == moved.end()) ? j : it->second;
      auto self = moved.find(p);
      moved[j] = (self == moved.end()) ? p : self->second;
      rows[p] = static_cast<std::int32_t>(pick / n);
      cols[p] = static_cast<std::int32_t>(pick % n);
      ++row_hits[rows[p]];
      ++col_hits[cols[p]];
    }
    const bool covered =
        std::all_of(row_hits.begin(), row_hits.end(), [](int h) { return h > 0; }) &&
        std::all_of(col_hits.begin(), col_hits.end(), [](int h) { return h > 0; });
    if (covered)
      return SamplingSet(m, n, std::move(rows), std::move(cols),
                         std::vector<double>(size, 0.0));
    rows.assign(size, 0);
    cols.assign(size, 0);
  }
  throw InsufficientSamplingError(
      "sample_uniform: row/column coverage not achieved within retry budget");
}

/// P_Omega applied to the factored matrix Y1 * Y2^T: returns one value per
/// entry of Omega, value[p] = sum_l Y1(i_p, l) * Y2(j_p, l). Runs in
/// O(|Omega| r).
inline std::vector<double> apply_proj_omega_lowrank(const Matrix& y1, const Matrix& y2,
                                                    const SamplingSet& omega) {
  if (y1.rows() != omega.rows() || y2.rows() != omega.cols() || y1.cols() != y2.cols())
    throw std::invalid_argument("apply_proj_omega_lowrank: factor dimensions mismatch");
  const auto rows = omega.entry_rows();
  const auto cols = omega.entry_cols();
  std::vector<double> out(static_cast<std::size_t>(omega.size()), 0.0);
  if (y1.cols() == 0) return out;
  const RowMatrix y1r = y1;
  const RowMatrix y2r = y2;
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = y1r.row(rows[p]).dot(y2r.row(cols[p]));
  return out;
}

/// R * B for a sparse R supported on Omega and dense B (n x k).
inline Matrix sparse_times_dense(const SamplingSet& r, const Matrix& b) {
  if (b.rows() != r.cols()) throw std::invalid_argument("sparse_times_dense: dimension mismatch");
  const auto rows = r.entry_rows();
  const auto cols = r.entry_cols();
  const auto vals = r.values();
  const RowMatrix br = b;
  RowMatrix out = RowMatrix::Zero(r.rows(), b.cols());
  for (std::size_t p = 0; p < vals.size(); ++p)
    out.row(rows[p]) += vals[p] * br.row(cols[p]);
  return out;
}

/// R^T * C for a sparse R supported on Omega and dense C (m x k).
inline Matrix transpose_times_dense(const SamplingSet& r, const Matrix& c) {
  if (c.rows() != r.rows())
    throw std::invalid_argument("transpose_times_dense: dimension mismatch");
  const auto rows = r.entry_rows();
  const auto cols = r.entry_cols();
  const auto vals = r.values();
  const RowMatrix cr = c;
  RowMatrix out = RowMatrix::Zero(r.cols(), c.cols());
  // Walk entries in (col, row) order so output rows fill sequentially.
  for (std::int64_t p : r.column_order()) out.row(cols[p]) += vals[p] * cr.row(rows[p]);
  return out;
}

/// <a, b> over aligned value sequences, accumulated in canonical order.
inline double omega_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("omega_dot: length mismatch");
  double s = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) s += a[p] * b[p];
  return s;
}

}  // namespace lrc
