#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

/// Raised when a numerical operation cannot produce a valid result
/// (e.g. a factorization collapses below the working rank).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised when random sampling cannot satisfy the row/column coverage
/// contract within the retry budget.
class InsufficientSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::uint64_t next_object_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Locale-independent decimal formatting with 17 significant digits,
/// enough for a bit-exact double round trip.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Locale-independent parse; the whole token must be consumed.
inline double parse_double(std::string_view s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("malformed number: '" + std::string(s) + "'");
  return v;
}

inline long parse_long(std::string_view s) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("malformed integer: '" + std::string(s) + "'");
  return v;
}

}  // namespace lrc
