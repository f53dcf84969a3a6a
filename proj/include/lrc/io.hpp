#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lrc/cg_solver.hpp"

namespace lrc {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t p = 0;
  while (p < line.size()) {
    while (p < line.size() && (line[p] == ' ' || line[p] == '\t' || line[p] == '\r')) ++p;
    std::size_t q = p;
    while (q < line.size() && line[q] != ' ' && line[q] != '\t' && line[q] != '\r') ++q;
    if (q > p) out.push_back(line.substr(p, q - p));
    p = q;
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
}

}  // namespace detail

/// Sparse triplet text format: header `m n nnz`, then `i j value` with
/// 1-based indices in lexicographic order and 17-significant-digit values.
/// parse(emit(s)) == s bit-exactly.
inline std::string emit_sampling_set(const SamplingSet& s) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.size()) * 28 + 32);
  out += std::to_string(s.rows());
  out += ' ';
  out += std::to_string(s.cols());
  out += ' ';
  out += std::to_string(s.size());
  out += '\n';
  const auto rows = s.entry_rows();
  const auto cols = s.entry_cols();
  const auto vals = s.values();
  for (Index p = 0; p < s.size(); ++p) {
    out += std::to_string(rows[p] + 1);
    out += ' ';
    out += std::to_string(cols[p] + 1);
    out += ' ';
    out += format_double(vals[p]);
    out += '\n';
  }
  return out;
}

inline SamplingSet parse_sampling_set(std::string_view text) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= text.size()) return {};
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    std::string_view line = text.substr(pos, e - pos);
    pos = e + 1;
    return line;
  };
  auto header = detail::split_ws(next_line());
  if (header.size() != 3) throw std::invalid_argument("sampling set file: malformed header");
  const Index m = parse_long(header[0]);
  const Index n = parse_long(header[1]);
  const Index nnz = parse_long(header[2]);
  std::vector<std::int32_t> rows(nnz), cols(nnz);
  std::vector<double> vals(nnz);
  for (Index p = 0; p < nnz; ++p) {
    auto tok = detail::split_ws(next_line());
    if (tok.size() != 3) throw std::invalid_argument("sampling set file: malformed entry line");
    rows[p] = static_cast<std::int32_t>(parse_long(tok[0]) - 1);
    cols[p] = static_cast<std::int32_t>(parse_long(tok[1]) - 1);
    vals[p] = parse_double(tok[2]);
  }
  return SamplingSet(m, n, std::move(rows), std::move(cols), std::move(vals));
}

inline void write_sampling_set(const std::filesystem::path& path, const SamplingSet& s) {
  detail::write_file(path, emit_sampling_set(s));
}

inline SamplingSet read_sampling_set(const std::filesystem::path& path) {
  return parse_sampling_set(detail::read_file(path));
}

/// Factor-pair file (ground truth or ALS factors): header `m n k`,
/// m rows of L, then n rows of R, 17-significant-digit values.
inline std::string emit_factors(const Matrix& l, const Matrix& r) {
  std::string out;
  out += std::to_string(l.rows());
  out += ' ';
  out += std::to_string(r.rows());
  out += ' ';
  out += std::to_string(l.cols());
  out += '\n';
  auto emit_rows = [&out](const Matrix& mat) {
    for (Index i = 0; i < mat.rows(); ++i) {
      for (Index j = 0; j < mat.cols(); ++j) {
        if (j) out += ' ';
        out += format_double(mat(i, j));
      }
      out += '\n';
    }
  };
  emit_rows(l);
  emit_rows(r);
  return out;
}

inline std::pair<Matrix, Matrix> parse_factors(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("factor file: empty");
  auto header = detail::split_ws(line);
  if (header.size() != 3) throw std::invalid_argument("factor file: malformed header");
  const Index m = parse_long(header[0]), n = parse_long(header[1]), k = parse_long(header[2]);
  auto read_rows = [&](Index count) {
    Matrix mat(count, k);
    for (Index i = 0; i < count; ++i) {
      if (!std::getline(in, line)) throw std::invalid_argument("factor file: truncated");
      auto tok = detail::split_ws(line);
      if (static_cast<Index>(tok.size()) != k)
        throw std::invalid_argument("factor file: malformed row");
      for (Index j = 0; j < k; ++j) mat(i, j) = parse_double(tok[j]);
    }
    return mat;
  };
  Matrix l = read_rows(m);
  Matrix r = read_rows(n);
  return {std::move(l), std::move(r)};
}

inline void write_factors(const std::filesystem::path& path, const Matrix& l, const Matrix& r) {
  detail::write_file(path, emit_factors(l, r));
}

inline std::pair<Matrix, Matrix> read_factors(const std::filesystem::path& path) {
  return parse_factors(detail::read_file(path));
}

/// Solution file: header `m n k`, U rows, one line of singular values,
/// V rows.
inline std::string emit_solution(const FixedRankMatrix& x) {
  std::string out;
  out += std::to_string(x.rows());
  out += ' ';
  out += std::to_string(x.cols());
  out += ' ';
  out += std::to_string(x.rank());
  out += '\n';
  auto emit_rows = [&out](const Matrix& mat) {
    for (Index i = 0; i < mat.rows(); ++i) {
      for (Index j = 0; j < mat.cols(); ++j) {
        if (j) out += ' ';
        out += format_double(mat(i, j));
      }
      out += '\n';
    }
  };
  emit_rows(x.basis_u());
  for (Index i = 0; i < x.rank(); ++i) {
    if (i) out += ' ';
    out += format_double(x.sigma()[i]);
  }
  out += '\n';
  emit_rows(x.basis_v());
  return out;
}

inline void write_solution(const std::filesystem::path& path, const FixedRankMatrix& x) {
  detail::write_file(path, emit_solution(x));
}

inline constexpr std::string_view kTraceCsvHeader =
    "iter,cost,grad_norm,rel_residual,beta,alpha,step,backtracks,sigma_max,sigma_min,wall_ns";

/// Per-iteration trace CSV with the fixed column set above; hybrid traces
/// append a `phase` column.
inline std::string emit_trace_csv(const SolverTrace& trace, bool with_phase = false) {
  std::string out{kTraceCsvHeader};
  if (with_phase) out += ",phase";
  out += '\n';
  for (const auto& rec : trace.records) {
    out += std::to_string(rec.iter);
    out += ',';
    out += format_double(rec.cost);
    out += ',';
    out += format_double(rec.grad_norm);
    out += ',';
    out += format_double(rec.rel_residual);
    out += ',';
    out += format_double(rec.beta);
    out += ',';
    out += format_double(rec.alpha);
    out += ',';
    out += format_double(rec.step);
    out += ',';
    out += std::to_string(rec.backtracks);
    out += ',';
    out += format_double(rec.sigma_max);
    out += ',';
    out += format_double(rec.sigma_min);
    out += ',';
    out += std::to_string(rec.wall_ns);
    if (with_phase) {
      out += ',';
      out += std::to_string(rec.phase);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<IterationRecord> parse_trace_csv(std::string_view text) {
  std::vector<IterationRecord> records;
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos) throw std::invalid_argument("trace csv: missing header");
  std::string_view header = text.substr(0, pos);
  if (header.substr(0, kTraceCsvHeader.size()) != kTraceCsvHeader)
    throw std::invalid_argument("trace csv: unexpected header");
  ++pos;
  while (pos < text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    std::string_view line = text.substr(pos, e - pos);
    pos = e + 1;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() < 11) throw std::invalid_argument("trace csv: malformed row");
    IterationRecord rec;
    rec.iter = static_cast<int>(parse_long(f[0]));
    rec.cost = parse_double(f[1]);
    rec.grad_norm = parse_double(f[2]);
    rec.rel_residual = parse_double(f[3]);
    rec.beta = parse_double(f[4]);
    rec.alpha = parse_double(f[5]);
    rec.step = parse_double(f[6]);
    rec.backtracks = static_cast<int>(parse_long(f[7]));
    rec.sigma_max = parse_double(f[8]);
    rec.sigma_min = parse_double(f[9]);
    rec.wall_ns = parse_long(f[10]);
    if (f.size() > 11) rec.phase = static_cast<int>(parse_long(f[11]));
    records.push_back(rec);
  }
  return records;
}

}  // namespace lrc
