#include <benchmark/benchmark.h>

#include "ioc/harness.hpp"
#include "ioc/hard_ioc.hpp"
#include "ioc/model.hpp"
#include "ioc/soft_ioc.hpp"

namespace {

using namespace ioc;

struct Data {
  LtiProblem problem;
  LqrSolution solution;
  Trajectory traj;
  JacobianTable table;
};

Data make(int example, double horizon) {
  Data d;
  d.problem = harness::example_problem(example);
  d.solution = solve_are(d.problem);
  d.traj = simulate_closed_loop(d.problem, d.solution, TimeGrid::uniform(0.0, horizon, 1e-3));
  d.table = tabulate_lti_quadratic(d.traj, d.problem, d.solution);
  return d;
}

void BM_SolveAre(benchmark::State& state) {
  const auto p = harness::example_problem(1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_are(p));
}
BENCHMARK(BM_SolveAre);

void BM_Simulate(benchmark::State& state) {
  const auto p = harness::example_problem(1);
  const auto sol = solve_are(p);
  const auto grid = TimeGrid::uniform(0.0, static_cast<double>(state.range(0)), 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_closed_loop(p, sol, grid));
  state.SetItemsProcessed(state.iterations() * grid.count);
}
BENCHMARK(BM_Simulate)->Arg(5)->Arg(20);

void BM_Riccati(benchmark::State& state) {
  const auto d = make(1, static_cast<double>(state.range(0)));
  const auto res = assemble_residual(d.table);
  const auto form = state.range(1) == 0 ? RiccatiForm::Reduced : RiccatiForm::CrossTerm;
  for (auto _ : state) benchmark::DoNotOptimize(integrate_riccati(res, d.traj.grid, form));
  state.SetItemsProcessed(state.iterations() * d.traj.grid.count);
}
BENCHMARK(BM_Riccati)->Args({5, 0})->Args({5, 1})->Args({20, 0});

void BM_Adjoint(benchmark::State& state) {
  const auto d = make(2, static_cast<double>(state.range(0)));
  for (auto _ : state) {
    auto L = integrate_L(d.table, d.traj.grid);
    benchmark::DoNotOptimize(assemble_W(d.table, std::move(L), d.traj.grid));
  }
  state.SetItemsProcessed(state.iterations() * d.traj.grid.count);
}
BENCHMARK(BM_Adjoint)->Arg(5)->Arg(17);

void BM_Pipeline(benchmark::State& state) {
  harness::ScenarioConfig cfg;
  cfg.problem = harness::example_problem(static_cast<int>(state.range(0)));
  cfg.diagnostics = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_pipeline(cfg));
}
BENCHMARK(BM_Pipeline)->Args({1, 0})->Args({1, 1})->Args({2, 1})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
