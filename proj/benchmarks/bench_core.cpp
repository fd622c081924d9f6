#include <vector>

#include <benchmark/benchmark.h>

#include "ioql/estimator.hpp"
#include "ioql/learner.hpp"
#include "ioql/oracle.hpp"
#include "ioql/scenario.hpp"

using namespace ioql;

namespace {

JointPolicy zero_policy(const MasModel& model, std::size_t horizon) {
  std::vector<PolicyGains> gains;
  for (std::size_t i = 0; i < model.agent_count(); ++i) gains.push_back(PolicyGains::zero(layout_for(model, i, horizon)));
  return JointPolicy(neighbor_sets(model.graph()), gains, CouplingMode::Exact);
}

void BM_ValueUpdate(benchmark::State& state) {
  const auto s = demo_scenario();
  const auto samples = collect_samples(s.model, zero_policy(s.model, 2), s.learner, 200, 1, 2);
  const QKernel prev(layout_for(s.model, 0, 2));
  for (auto _ : state) benchmark::DoNotOptimize(value_update(samples[0], prev, s.weights[0], s.learner));
}
BENCHMARK(BM_ValueUpdate);

void BM_ReconstructError(benchmark::State& state) {
  const auto s = demo_scenario();
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto est = build_estimator(s.model, 0, n);
  Rng rng(3);
  const auto cw = random_consistent_window(s.model, 0, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct_error(est, cw.window));
}
BENCHMARK(BM_ReconstructError)->Arg(2)->Arg(4)->Arg(8);

void BM_JointControls(benchmark::State& state) {
  const auto s = demo_scenario();
  const auto out = run(s.model, s.weights, s.learner);
  const JointPolicy policy(neighbor_sets(s.model.graph()), out.gains, CouplingMode::Exact);
  const auto recorded = record_run(s.model, policy, 2, 0.1, 10, 1, 2);
  const long k = recorded.trace.output_end() - 1;
  for (auto _ : state) benchmark::DoNotOptimize(policy.controls(recorded.trace, k));
}
BENCHMARK(BM_JointControls);

void BM_DareSolve(benchmark::State& state) {
  const auto s = demo_scenario();
  const auto red = single_agent_reduction(s.model, s.weights, 0);
  const auto f = error_system_matrices(red.model, 0).f;
  for (auto _ : state)
    benchmark::DoNotOptimize(dare_solve(red.model.a(), f, red.weights[0].q, red.weights[0].r_self));
}
BENCHMARK(BM_DareSolve);

void BM_LearnDemo(benchmark::State& state) {
  const auto s = demo_scenario();
  for (auto _ : state) benchmark::DoNotOptimize(run(s.model, s.weights, s.learner));
}
BENCHMARK(BM_LearnDemo)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
