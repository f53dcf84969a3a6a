// Command-line harness for the low-rank completion library: problem
// generation, single solves, benchmark sweeps and trace post-processing.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

#include "lrc/lrc.hpp"

namespace {

struct GenerateOptions {
  long m = 0, n = 0, k = 0, samples = 0;
  double os = 3.0, noise = 0.0, bivariate_sigma = 0.0;
  unsigned long long seed = 1;
  bool test_set = false;
  std::string out;
};

int run_generate(const GenerateOptions& opt) {
  const lrc::Index n = opt.n;
  const lrc::Index m = opt.m > 0 ? opt.m : n;
  const lrc::Index size =
      opt.samples > 0 ? opt.samples : lrc::oversampling_size(m, n, opt.k, opt.os);

  if (opt.bivariate_sigma > 0.0) {
    if (m != n) throw std::invalid_argument("bivariate problems are square; drop --m");
    lrc::CompletionProblem problem =
        lrc::make_bivariate_problem(n, opt.bivariate_sigma, size, opt.k, opt.seed, opt.test_set);
    lrc::write_sampling_set(opt.out + ".omega", problem.data);
    std::printf("wrote %s.omega (%lld samples)\n", opt.out.c_str(),
                static_cast<long long>(size));
    if (problem.test_set) {
      lrc::write_sampling_set(opt.out + ".test", *problem.test_set);
      std::printf("wrote %s.test\n", opt.out.c_str());
    }
    return 0;
  }

  lrc::CompletionProblem problem =
      lrc::make_random_problem(m, n, opt.k, opt.os, opt.seed, opt.noise, opt.test_set);
  lrc::write_sampling_set(opt.out + ".omega", problem.data);
  std::printf("wrote %s.omega (%lld samples)\n", opt.out.c_str(), static_cast<long long>(size));
  lrc::write_factors(opt.out + ".truth", problem.truth_factors->first,
                     problem.truth_factors->second);
  std::printf("wrote %s.truth\n", opt.out.c_str());
  if (problem.test_set) {
    lrc::write_sampling_set(opt.out + ".test", *problem.test_set);
    std::printf("wrote %s.test\n", opt.out.c_str());
  }
  return 0;
}

struct SolveOptions {
  std::string problem_file, truth_file, test_file, trace_file, out_file;
  long k = 0;
  double residual_tol = 1e-12, grad_tol = 1e-14, mu = 0.0;
  long max_iters = 4000;
  std::string stagnation = "off";
  long hybrid_sweeps = 0;
  unsigned long long seed = 1;
};

int run_solve(const SolveOptions& opt) {
  lrc::SamplingSet data = lrc::read_sampling_set(opt.problem_file);
  lrc::CompletionProblem problem(data.rows(), data.cols(), opt.k, std::move(data));
  if (!opt.truth_file.empty()) {
    auto [l, r] = lrc::read_factors(opt.truth_file);
    problem.truth_factors = std::make_pair(std::move(l), std::move(r));
  }
  if (!opt.test_file.empty()) problem.test_set = lrc::read_sampling_set(opt.test_file);

  lrc::SolverConfig cfg;
  cfg.residual_tol = opt.residual_tol;
  cfg.grad_tol = opt.grad_tol;
  cfg.max_iters = static_cast<int>(opt.max_iters);
  cfg.mu = opt.mu;
  if (opt.stagnation != "off") {
    cfg.stagnation_enabled = true;
    cfg.stagnation_threshold = lrc::parse_double(opt.stagnation);
  }

  auto [x, trace] = opt.hybrid_sweeps > 0
                        ? lrc::solve_hybrid(problem, static_cast<int>(opt.hybrid_sweeps), cfg,
                                            lrc::Rng::derive(opt.seed, 8))
                        : lrc::solve(problem, cfg,
                                     lrc::random_fixed_rank(problem.m, problem.n, problem.k,
                                                            lrc::Rng::derive(opt.seed, 7)));

  std::printf("iterations %d\n", trace.iterations());
  std::printf("termination %s\n", std::string(lrc::to_string(trace.termination)).c_str());
  std::printf("cost %s\n", lrc::format_double(trace.last().cost).c_str());
  std::printf("grad_norm %s\n", lrc::format_double(trace.last().grad_norm).c_str());
  std::printf("rel_residual %s\n", lrc::format_double(trace.last().rel_residual).c_str());
  if (problem.truth_factors) {
    const double err = lrc::metric_relative_error(x, problem.truth_factors->first,
                                                  problem.truth_factors->second);
    std::printf("rel_error %s\n", lrc::format_double(err).c_str());
    const double off = lrc::metric_offsample_error(x, problem.truth_factors->first,
                                                   problem.truth_factors->second, problem.data);
    std::printf("offsample_error %s\n", lrc::format_double(off).c_str());
  }
  if (problem.test_set) {
    const auto te = lrc::metric_test_error(x, *problem.test_set);
    std::printf("test_error %s%s\n", lrc::format_double(te.value).c_str(),
                te.absolute ? " (absolute)" : "");
  }
  if (auto rho = lrc::convergence_factor(trace))
    std::printf("rho %s\n", lrc::format_double(*rho).c_str());

  if (!opt.trace_file.empty())
    lrc::detail::write_file(opt.trace_file, lrc::emit_trace_csv(trace, opt.hybrid_sweeps > 0));
  if (!opt.out_file.empty()) lrc::write_solution(opt.out_file, x);
  return 0;
}

int run_bench(const std::string& spec_file, const std::string& out_dir, int threads) {
  const lrc::ExperimentSpec spec =
      lrc::parse_experiment_spec(lrc::detail::read_file(spec_file));
  lrc::write_experiment_output(out_dir, spec, threads);
  std::printf("wrote %s/results.csv and %s/timings.csv\n", out_dir.c_str(), out_dir.c_str());
  return 0;
}

int run_rho(const std::string& trace_file, long max_iters) {
  lrc::SolverTrace trace;
  trace.records = lrc::parse_trace_csv(lrc::detail::read_file(trace_file));
  trace.termination = static_cast<long>(trace.records.size()) >= max_iters
                          ? lrc::Termination::MaxIters
                          : lrc::Termination::ResidualTol;
  const auto rho = lrc::convergence_factor(trace);
  if (!rho) throw std::invalid_argument("rho: trace has fewer than 12 iterations");
  std::printf("%s\n", lrc::format_double(*rho).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank matrix completion by geometric CG on the fixed-rank manifold"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* cmd_gen = app.add_subcommand("generate", "Generate a completion problem on disk");
  cmd_gen->add_option("--n", gen.n, "columns (and rows unless --m)")->required();
  cmd_gen->add_option("--m", gen.m, "rows (defaults to --n)");
  cmd_gen->add_option("--rank,-k", gen.k, "rank (ground truth / sampling size)")->required();
  cmd_gen->add_option("--os", gen.os, "oversampling factor (default 3)");
  cmd_gen->add_option("--samples", gen.samples, "explicit |Omega| (overrides --os)");
  cmd_gen->add_option("--seed", gen.seed, "random seed (default 1)");
  cmd_gen->add_option("--noise", gen.noise, "relative noise level epsilon");
  cmd_gen->add_option("--bivariate", gen.bivariate_sigma,
                      "bivariate-function matrix with this decay sigma");
  cmd_gen->add_flag("--test-set", gen.test_set, "also draw a held-out test set");
  cmd_gen->add_option("--out,-o", gen.out, "output file prefix")->required();

  SolveOptions sol;
  auto* cmd_solve = app.add_subcommand("solve", "Solve one problem file");
  cmd_solve->add_option("--problem", sol.problem_file, "observed-data file (.omega)")->required();
  cmd_solve->add_option("--rank,-k", sol.k, "manifold rank")->required();
  cmd_solve->add_option("--truth", sol.truth_file, "ground-truth factor file");
  cmd_solve->add_option("--test", sol.test_file, "held-out test set file");
  cmd_solve->add_option("--tol", sol.residual_tol, "relative residual tolerance (default 1e-12)");
  cmd_solve->add_option("--grad-tol", sol.grad_tol, "gradient tolerance, relative (default 1e-14)");
  cmd_solve->add_option("--max-iters", sol.max_iters, "iteration cap (default 4000)");
  cmd_solve->add_option("--stagnation", sol.stagnation,
                        "relative-change threshold or 'off' (default off)");
  cmd_solve->add_option("--mu", sol.mu, "regularization weight (default 0)");
  cmd_solve->add_option("--hybrid-sweeps", sol.hybrid_sweeps,
                        "warm-start ALS sweeps before CG (default 0)");
  cmd_solve->add_option("--seed", sol.seed, "seed for the random starting point");
  cmd_solve->add_option("--trace", sol.trace_file, "write per-iteration trace CSV here");
  cmd_solve->add_option("--out,-o", sol.out_file, "write solution factors here");

  std::string bench_spec, bench_out = "bench_out";
  int bench_threads = static_cast<int>(std::thread::hardware_concurrency());
  auto* cmd_bench = app.add_subcommand("bench", "Run an experiment spec file");
  cmd_bench->add_option("--spec", bench_spec, "experiment spec file")->required();
  cmd_bench->add_option("--out", bench_out, "output directory (default bench_out)");
  cmd_bench->add_option("--threads", bench_threads, "worker pool size");

  std::string rho_trace;
  long rho_max_iters = 4000;
  auto* cmd_rho = app.add_subcommand("rho", "Convergence factor from a trace CSV");
  cmd_rho->add_option("--trace", rho_trace, "trace CSV file")->required();
  cmd_rho->add_option("--max-iters", rho_max_iters,
                      "iteration budget the run had (default 4000)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) return run_generate(gen);
    if (cmd_solve->parsed()) return run_solve(sol);
    if (cmd_bench->parsed()) return run_bench(bench_spec, bench_out, bench_threads);
    if (cmd_rho->parsed()) return run_rho(rho_trace, rho_max_iters);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
