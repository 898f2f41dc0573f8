// Serial reference vs OpenMP kernels on synthetic maps.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "semap/kernels.hpp"

namespace {

using semap::Execution;

struct Inputs {
  std::size_t cells;
  std::size_t classes = 5;
  std::size_t neighbors = 3;
  std::vector<double> own, logq, nbr, weights, out;

  explicit Inputs(std::size_t n) : cells(n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_real_distribution<double> lp(-5.0, -0.01);
    own.resize(cells * classes);
    logq.resize(cells * classes);
    nbr.resize(cells * neighbors * classes);
    for (auto& x : own) x = u(rng);
    for (auto& x : logq) x = lp(rng);
    for (auto& x : nbr) x = u(rng);
    weights.assign(neighbors, 0.25);
    out.resize(cells * classes);
  }

  semap::CellBatch batch() const { return {cells, classes, neighbors, own, logq, nbr, weights}; }
};

void update_cells(benchmark::State& state, Execution exec) {
  Inputs in(static_cast<std::size_t>(state.range(0)));
  const semap::CellUpdateParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(semap::update_cells(in.batch(), params, in.out, exec));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void squared_distance(benchmark::State& state, Execution exec) {
  Inputs in(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(semap::grid_squared_distance(in.own, in.out, in.classes, 1.0, exec).value());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(update_cells, serial, Execution::Serial)->RangeMultiplier(8)->Range(4096, 1 << 18);
BENCHMARK_CAPTURE(update_cells, parallel, Execution::Parallel)->RangeMultiplier(8)->Range(4096, 1 << 18);
BENCHMARK_CAPTURE(squared_distance, serial, Execution::Serial)->RangeMultiplier(8)->Range(4096, 1 << 18);
BENCHMARK_CAPTURE(squared_distance, parallel, Execution::Parallel)->RangeMultiplier(8)->Range(4096, 1 << 18);

BENCHMARK_MAIN();
