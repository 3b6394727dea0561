// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>

#include "eblup/kron.hpp"
#include "eblup/simulation.hpp"

using namespace eblup;

namespace {

// levels (a, b, c, reps), main effects plus the a:b interaction
BalancedDesign crossed(Index a) {
  return BalancedDesign({a, 8, 6, 4}, {0b1110, 0b1101, 0b1011, 0b1100}, 0b1111);
}

VectorXd normals(Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  VectorXd x(n);
  for (Index i = 0; i < n; ++i) x(i) = normal(gen);
  return x;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(1) == 0 ? Execution::Serial : Execution::Parallel;
}

void label(benchmark::State& state) { state.SetLabel(state.range(1) == 0 ? "serial" : "parallel"); }

const VectorXd kSigma = (VectorXd(5) << 1.0, 0.5, 0.3, 0.2, 0.7).finished();

void BM_ApplyKronTerm(benchmark::State& state) {
  const BalancedDesign d = crossed(state.range(0));
  const VectorXd x = normals(d.n(), 1);
  VectorXd out;
  for (auto _ : state) {
    kernels::apply_kron_term(d, 0b1100, x, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  label(state);
}

void BM_ApplyExpansion(benchmark::State& state) {
  const BalancedDesign d = crossed(state.range(0));
  const VectorXd x = normals(d.n(), 2);
  const KronCoefficients tau = tau_coefficients(d, kSigma);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::apply_expansion(d, tau, x, exec_of(state)));
  label(state);
}

void BM_Collapse(benchmark::State& state) {
  const BalancedDesign d = crossed(state.range(0));
  const VectorXd x = normals(d.n(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::collapse(d, 0b1100, x, exec_of(state)));
  label(state);
}

void BM_BlupKron(benchmark::State& state) {
  const BalancedDesign d = crossed(state.range(0));
  const VectorXd y = normals(d.n(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(blup_kron(d, kSigma, y, 3, exec_of(state)));
  label(state);
}

void BM_RunStudy(benchmark::State& state) {
  McConfig cfg = preset_config("harville-jeske-large", 0.5);
  cfg.replicates = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(run_study(cfg, exec_of(state)));
  label(state);
}

void kron_args(benchmark::internal::Benchmark* b) {
  for (int a : {4, 16, 64})
    for (int e : {0, 1}) b->Args({a, e});
}

}  // namespace

BENCHMARK(BM_ApplyKronTerm)->Apply(kron_args);
BENCHMARK(BM_ApplyExpansion)->Apply(kron_args);
BENCHMARK(BM_Collapse)->Apply(kron_args);
BENCHMARK(BM_BlupKron)->Apply(kron_args);
BENCHMARK(BM_RunStudy)->Args({50, 0})->Args({50, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
