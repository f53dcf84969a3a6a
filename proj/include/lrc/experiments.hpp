#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lrc/baseline_als.hpp"
#include "lrc/io.hpp"
#include "lrc/metrics.hpp"

namespace lrc {

/// One warm-start sweep is charged as half a CG iteration when comparing
/// hybrid and plain runs, matching the roughly 2x per-iteration cost gap
/// between the two phases at moderate oversampling.
inline constexpr double kSweepIterEquivalent = 0.5;

enum class ExperimentKind { Single, SizeSweep, RankSweep, OsSweep, NoiseSweep, Hybrid, Homotopy };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Single: return "single";
    case ExperimentKind::SizeSweep: return "size-sweep";
    case ExperimentKind::RankSweep: return "rank-sweep";
    case ExperimentKind::OsSweep: return "os-sweep";
    case ExperimentKind::NoiseSweep: return "noise-sweep";
    case ExperimentKind::Hybrid: return "hybrid";
    case ExperimentKind::Homotopy: return "homotopy";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "single") return ExperimentKind::Single;
  if (s == "size-sweep") return ExperimentKind::SizeSweep;
  if (s == "rank-sweep") return ExperimentKind::RankSweep;
  if (s == "os-sweep") return ExperimentKind::OsSweep;
  if (s == "noise-sweep") return ExperimentKind::NoiseSweep;
  if (s == "hybrid") return ExperimentKind::Hybrid;
  if (s == "homotopy") return ExperimentKind::Homotopy;
  throw std::invalid_argument("unknown experiment kind: '" + std::string(s) + "'");
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Single;
  Index m = 0;  // 0 means square (m = n)
  std::vector<Index> n_list;
  std::vector<Index> k_list;
  std::vector<double> os_list;
  std::vector<double> noise_list;
  std::vector<std::uint64_t> seeds;
  int hybrid_sweeps = 20;
  double bivariate_sigma = 1.0;
  Index omega_rank = 0;  // homotopy: rank used to size |Omega|; 0 -> max k
  bool with_test_set = false;
  bool emit_traces = false;
  SolverConfig solver;

  void validate() const {
    if (n_list.empty() || k_list.empty() || os_list.empty() || noise_list.empty())
      throw std::invalid_argument("experiment spec: a parameter grid is empty");
    if (seeds.empty()) throw std::invalid_argument("experiment spec: seed list is empty");
    for (std::size_t i = 0; i < seeds.size(); ++i)
      for (std::size_t j = i + 1; j < seeds.size(); ++j)
        if (seeds[i] == seeds[j]) throw std::invalid_argument("experiment spec: seeds must be distinct");
    if (hybrid_sweeps < 0) throw std::invalid_argument("experiment spec: hybrid_sweeps must be >= 0");
    if (kind == ExperimentKind::Homotopy) {
      for (std::size_t i = 0; i < k_list.size(); ++i)
        if (k_list[i] != static_cast<Index>(i) + 1)
          throw std::invalid_argument("experiment spec: homotopy needs ranks 1..K in order");
    }
    solver.validate();
  }
};

/// Flat `key = value` spec text. Unknown keys are rejected so typos do not
/// silently fall back to defaults.
inline ExperimentSpec parse_experiment_spec(std::string_view text) {
  ExperimentSpec spec;
  bool saw_kind = false, saw_stagnation = false, saw_max_iters = false, saw_test_set = false;

  auto parse_index_list = [](std::string_view v) {
    std::vector<Index> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= v.size(); ++i)
      if (i == v.size() || v[i] == ',') {
        if (i > start) out.push_back(parse_long(v.substr(start, i - start)));
        start = i + 1;
      }
    return out;
  };
  auto parse_double_list = [](std::string_view v) {
    std::vector<double> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= v.size(); ++i)
      if (i == v.size() || v[i] == ',') {
        if (i > start) out.push_back(parse_double(v.substr(start, i - start)));
        start = i + 1;
      }
    return out;
  };
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return s;
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    std::string_view line = trim(text.substr(pos, e - pos));
    pos = e + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("experiment spec: expected 'key = value' line");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));

    if (key == "kind") {
      spec.kind = parse_experiment_kind(value);
      saw_kind = true;
    } else if (key == "m") {
      spec.m = parse_long(value);
    } else if (key == "n" || key == "n_list") {
      spec.n_list = parse_index_list(value);
    } else if (key == "k" || key == "k_list") {
      spec.k_list = parse_index_list(value);
    } else if (key == "os" || key == "os_list") {
      spec.os_list = parse_double_list(value);
    } else if (key == "noise" || key == "noise_list") {
      spec.noise_list = parse_double_list(value);
    } else if (key == "seeds") {
      for (Index s : parse_index_list(value)) spec.seeds.push_back(static_cast<std::uint64_t>(s));
    } else if (key == "hybrid_sweeps") {
      spec.hybrid_sweeps = static_cast<int>(parse_long(value));
    } else if (key == "bivariate_sigma") {
      spec.bivariate_sigma = parse_double(value);
    } else if (key == "omega_rank") {
      spec.omega_rank = parse_long(value);
    } else if (key == "test_set") {
      spec.with_test_set = parse_long(value) != 0;
      saw_test_set = true;
    } else if (key == "emit_traces") {
      spec.emit_traces = parse_long(value) != 0;
    } else if (key == "residual_tol") {
      spec.solver.residual_tol = parse_double(value);
    } else if (key == "grad_tol") {
      spec.solver.grad_tol = parse_double(value);
    } else if (key == "max_iters") {
      spec.solver.max_iters = static_cast<int>(parse_long(value));
      saw_max_iters = true;
    } else if (key == "stagnation") {
      if (value == "off" || value == "0") {
        spec.solver.stagnation_enabled = false;
      } else {
        spec.solver.stagnation_enabled = true;
        spec.solver.stagnation_threshold = parse_double(value);
      }
      saw_stagnation = true;
    } else if (key == "mu") {
      spec.solver.mu = parse_double(value);
    } else {
      throw std::invalid_argument("experiment spec: unknown key '" + std::string(key) + "'");
    }
  }
  if (!saw_kind) throw std::invalid_argument("experiment spec: missing 'kind'");

  // per-kind defaults
  if (spec.noise_list.empty()) spec.noise_list = {0.0};
  if ((spec.kind == ExperimentKind::NoiseSweep || spec.kind == ExperimentKind::Homotopy) &&
      !saw_stagnation)
    spec.solver.stagnation_enabled = true;
  if (spec.kind == ExperimentKind::Homotopy) {
    if (!saw_max_iters) spec.solver.max_iters = 500;
    if (!saw_test_set) spec.with_test_set = true;
  }
  spec.validate();
  return spec;
}

struct RunRow {
  std::string kind, solver;
  Index m = 0, n = 0, k = 0;
  double os = 0.0, noise = 0.0;
  int sweeps = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  int iterations = 0;
  std::string termination;
  double cost = NAN, grad_norm = NAN, rel_residual = NAN, rel_error = NAN,
         offsample_error = NAN, test_error = NAN, rho = NAN, beta_late = NAN,
         armijo_zero_frac = NAN, iter_equivalents = NAN;
  int bound_violations = 0, fallback_steps = 0;
  std::int64_t wall_ns = 0;
  double ns_per_iter = NAN, ns_per_unit_work = NAN;
  std::optional<SolverTrace> trace;
};

struct ExperimentOutput {
  std::vector<RunRow> rows;
  std::string results_csv;
  std::string timings_csv;
};

namespace detail {

inline void fill_row_from_solve(RunRow& row, const CompletionProblem& problem,
                                const FixedRankMatrix& x, SolverTrace&& trace, bool keep_trace) {
  row.iterations = trace.iterations();
  row.termination = std::string(to_string(trace.termination));
  row.cost = trace.records.empty() ? NAN : trace.last().cost;
  row.grad_norm = trace.records.empty() ? NAN : trace.last().grad_norm;
  row.rel_residual = trace.records.empty() ? NAN : trace.last().rel_residual;
  row.bound_violations = trace.sigma_bound_violations;
  row.fallback_steps = trace.fallback_steps;

  if (problem.truth_factors) {
    row.rel_error = metric_relative_error(x, problem.truth_factors->first,
                                          problem.truth_factors->second);
    row.offsample_error = metric_offsample_error(x, problem.truth_factors->first,
                                                 problem.truth_factors->second, problem.data);
  } else if (problem.truth_dense)
    row.rel_error = metric_relative_error(x, *problem.truth_dense);
  if (problem.test_set) row.test_error = metric_test_error(x, *problem.test_set).value;

  if (auto rho = convergence_factor(trace)) row.rho = *rho;
  if (auto b = mean_beta_late(trace)) row.beta_late = *b;
  if (auto f = armijo_zero_fraction(trace)) row.armijo_zero_frac = *f;

  int cg_iters = 0;
  int sweep_iters = 0;
  std::vector<std::int64_t> per_iter;
  per_iter.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    (rec.phase == 1 ? cg_iters : sweep_iters) += 1;
    row.wall_ns += rec.wall_ns;
    if (rec.phase == 1) per_iter.push_back(rec.wall_ns);
  }
  row.iter_equivalents = cg_iters + kSweepIterEquivalent * sweep_iters;
  if (!per_iter.empty()) {
    std::nth_element(per_iter.begin(), per_iter.begin() + per_iter.size() / 2, per_iter.end());
    row.ns_per_iter = static_cast<double>(per_iter[per_iter.size() / 2]);
    const double unit = static_cast<double>(problem.n) * problem.k * problem.k +
                        static_cast<double>(problem.data.size()) * problem.k;
    row.ns_per_unit_work = row.ns_per_iter / unit;
  }
  if (keep_trace) row.trace = std::move(trace);
}

/// Runs fn(i) for i in [0, count) on a small pool. Each index writes only
/// its own output slot, so results do not depend on the pool size.
inline void parallel_for_indexed(std::size_t count, int threads,
                                 const std::function<void(std::size_t)>& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int spawn = std::min<int>(threads, static_cast<int>(count)) - 1;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

struct GridPoint {
  Index n = 0, k = 0;
  double os = 3.0, noise = 0.0;
};

}  // namespace detail

inline ExperimentOutput run_experiment(const ExperimentSpec& spec, int threads = 1);

namespace detail {

inline std::string csv_field(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline constexpr std::string_view kResultsHeader =
    "kind,solver,m,n,k,os,noise,sweeps,seed,status,iterations,termination,cost,grad_norm,"
    "rel_residual,rel_error,offsample_error,test_error,rho,beta_late,armijo_zero_frac,iter_equivalents,"
    "bound_violations,fallback_steps";

inline constexpr std::string_view kTimingsHeader =
    "kind,solver,m,n,k,os,noise,sweeps,seed,wall_ns,iterations,ns_per_iter,ns_per_unit_work";

inline void append_results_row(std::string& out, const RunRow& r) {
  out += r.kind;
  out += ',';
  out += r.solver;
  out += ',';
  out += std::to_string(r.m);
  out += ',';
  out += std::to_string(r.n);
  out += ',';
  out += std::to_string(r.k);
  out += ',';
  out += format_double(r.os);
  out += ',';
  out += format_double(r.noise);
  out += ',';
  out += std::to_string(r.sweeps);
  out += ',';
  out += std::to_string(r.seed);
  out += ',';
  out += r.status;
  out += ',';
  out += std::to_string(r.iterations);
  out += ',';
  out += r.termination;
  out += ',';
  out += csv_field(r.cost);
  out += ',';
  out += csv_field(r.grad_norm);
  out += ',';
  out += csv_field(r.rel_residual);
  out += ',';
  out += csv_field(r.rel_error);
  out += ',';
  out += csv_field(r.offsample_error);
  out += ',';
  out += csv_field(r.test_error);
  out += ',';
  out += csv_field(r.rho);
  out += ',';
  out += csv_field(r.beta_late);
  out += ',';
  out += csv_field(r.armijo_zero_frac);
  out += ',';
  out += csv_field(r.iter_equivalents);
  out += ',';
  out += std::to_string(r.bound_violations);
  out += ',';
  out += std::to_string(r.fallback_steps);
  out += '\n';
}

inline void append_timings_row(std::string& out, const RunRow& r) {
  out += r.kind;
  out += ',';
  out += r.solver;
  out += ',';
  out += std::to_string(r.m);
  out += ',';
  out += std::to_string(r.n);
  out += ',';
  out += std::to_string(r.k);
  out += ',';
  out += format_double(r.os);
  out += ',';
  out += format_double(r.noise);
  out += ',';
  out += std::to_string(r.sweeps);
  out += ',';
  out += std::to_string(r.seed);
  out += ',';
  out += std::to_string(r.wall_ns);
  out += ',';
  out += std::to_string(r.iterations);
  out += ',';
  out += csv_field(r.ns_per_iter);
  out += ',';
  out += csv_field(r.ns_per_unit_work);
  out += '\n';
}

}  // namespace detail

inline ExperimentOutput run_experiment(const ExperimentSpec& spec, int threads) {
  spec.validate();

  std::vector<detail::GridPoint> points;
  const auto base = detail::GridPoint{spec.n_list[0], spec.k_list[0], spec.os_list[0],
                                      spec.noise_list[0]};
  switch (spec.kind) {
    case ExperimentKind::Single:
    case ExperimentKind::Hybrid:
      points.push_back(base);
      break;
    case ExperimentKind::SizeSweep:
      for (Index n : spec.n_list) points.push_back({n, base.k, base.os, base.noise});
      break;
    case ExperimentKind::RankSweep:
      for (Index k : spec.k_list) points.push_back({base.n, k, base.os, base.noise});
      break;
    case ExperimentKind::OsSweep:
      for (double os : spec.os_list) points.push_back({base.n, base.k, os, base.noise});
      break;
    case ExperimentKind::NoiseSweep:
      for (double eps : spec.noise_list) points.push_back({base.n, base.k, base.os, eps});
      break;
    case ExperimentKind::Homotopy:
      points.push_back(base);  // ranks handled inside the per-seed unit
      break;
  }

  struct Unit {
    detail::GridPoint point;
    std::uint64_t seed;
  };
  std::vector<Unit> units;
  if (spec.kind == ExperimentKind::Homotopy) {
    for (std::uint64_t seed : spec.seeds) units.push_back({base, seed});
  } else {
    for (const auto& p : points)
      for (std::uint64_t seed : spec.seeds) units.push_back({p, seed});
  }

  const bool keep_traces = spec.emit_traces;
  std::vector<std::vector<RunRow>> unit_rows(units.size());

  auto run_unit = [&](std::size_t ui) {
    const Unit& u = units[ui];
    const Index n = u.point.n;
    const Index m = spec.m > 0 ? spec.m : n;
    std::vector<RunRow> rows;
    auto base_row = [&](std::string solver_label, Index k) {
      RunRow row;
      row.kind = std::string(to_string(spec.kind));
      row.solver = std::move(solver_label);
      row.m = m;
      row.n = n;
      row.k = k;
      row.os = u.point.os;
      row.noise = u.point.noise;
      row.sweeps = spec.kind == ExperimentKind::Hybrid ? spec.hybrid_sweeps : 0;
      row.seed = u.seed;
      return row;
    };
    try {
      if (spec.kind == ExperimentKind::Homotopy) {
        const Index k_max = spec.k_list.back();
        const Index k_omega = spec.omega_rank > 0 ? spec.omega_rank : k_max;
        const Index size = oversampling_size(n, n, k_omega, u.point.os);
        CompletionProblem proto =
            make_bivariate_problem(n, spec.bivariate_sigma, size, 1, u.seed, true);
        std::optional<FixedRankMatrix> chain;
        for (Index k : spec.k_list) {
          CompletionProblem problem = proto;
          problem.k = k;
          FixedRankMatrix start = k == 1
                                      ? random_fixed_rank(n, n, 1, Rng::derive(u.seed, 10))
                                      : homotopy_init(*chain, Rng::derive(u.seed, 10 + k));
          auto [x, trace] = solve(problem, spec.solver, start);
          RunRow row = base_row("homotopy", k);
          detail::fill_row_from_solve(row, problem, x, std::move(trace), keep_traces);
          rows.push_back(std::move(row));
          chain = std::move(x);

          FixedRankMatrix fresh_start = random_fixed_rank(n, n, k, Rng::derive(u.seed, 100 + k));
          auto [xf, tracef] = solve(problem, spec.solver, fresh_start);
          RunRow rowf = base_row("fresh", k);
          detail::fill_row_from_solve(rowf, problem, xf, std::move(tracef), keep_traces);
          rows.push_back(std::move(rowf));
        }
      } else {
        CompletionProblem problem = make_random_problem(m, n, u.point.k, u.point.os, u.seed,
                                                        u.point.noise, spec.with_test_set);
        FixedRankMatrix x1 = random_fixed_rank(m, n, u.point.k, Rng::derive(u.seed, 7));
        {
          auto [x, trace] = solve(problem, spec.solver, x1);
          RunRow row = base_row("cg", u.point.k);
          detail::fill_row_from_solve(row, problem, x, std::move(trace), keep_traces);
          rows.push_back(std::move(row));
        }
        if (spec.kind == ExperimentKind::Hybrid) {
          auto [x, trace] =
              solve_hybrid(problem, spec.hybrid_sweeps, spec.solver, Rng::derive(u.seed, 8));
          RunRow row = base_row("hybrid", u.point.k);
          detail::fill_row_from_solve(row, problem, x, std::move(trace), keep_traces);
          rows.push_back(std::move(row));
        }
      }
    } catch (const std::exception& e) {
      RunRow row = base_row("cg", u.point.k);
      row.status = e.what();
      for (char& c : row.status)
        if (c == ',' || c == '\n') c = ';';
      rows.push_back(std::move(row));
    }
    unit_rows[ui] = std::move(rows);
  };

  detail::parallel_for_indexed(units.size(), threads, run_unit);

  ExperimentOutput out;
  out.results_csv = std::string(detail::kResultsHeader) + "\n";
  out.timings_csv = std::string(detail::kTimingsHeader) + "\n";
  for (auto& rows : unit_rows)
    for (auto& row : rows) {
      detail::append_results_row(out.results_csv, row);
      detail::append_timings_row(out.timings_csv, row);
      out.rows.push_back(std::move(row));
    }
  return out;
}

/// Runs the experiment and writes results.csv, timings.csv and (optionally)
/// one trace CSV per row into `out_dir`. results.csv is byte-identical
/// across reruns and pool sizes; timings.csv carries the measured wall
/// times and is not.
inline void write_experiment_output(const std::filesystem::path& out_dir,
                                    const ExperimentSpec& spec, int threads) {
  ExperimentOutput out = run_experiment(spec, threads);
  std::filesystem::create_directories(out_dir);
  detail::write_file(out_dir / "results.csv", out.results_csv);
  detail::write_file(out_dir / "timings.csv", out.timings_csv);
  if (spec.emit_traces) {
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      if (!out.rows[i].trace) continue;
      const bool with_phase = out.rows[i].solver == "hybrid";
      detail::write_file(out_dir / ("trace_" + std::to_string(i) + ".csv"),
                         emit_trace_csv(*out.rows[i].trace, with_phase));
    }
  }
}

}  // namespace lrc
