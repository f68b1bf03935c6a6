#include <benchmark/benchmark.h>

#include <random>

#include "mobe/factorizer.hpp"
#include "mobe/linalg.hpp"
#include "mobe/runtime.hpp"
#include "mobe/synthetic.hpp"

namespace {

using namespace mobe;

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = gaussian(n, n, 1), b = gaussian(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(48)->Arg(128)->Arg(256);

void BM_Svd(benchmark::State& state) {
  const auto a = gaussian(48, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(BM_Svd)->Arg(128)->Arg(512);

// One optimizer step's worth of work at the planted-recovery size.
void BM_LossAndGrads(benchmark::State& state) {
  SyntheticOptions o;
  o.mode = SyntheticMode::kPlanted;
  o.basis_count = 4;
  o.rank = 48;
  const auto s = generate_synthetic(MoEConfig{1, 16, 128, 48, 2, std::nullopt}, o);
  const auto& params = std::get<BasisProjection>(s.truth->layers[0].gate);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(s.model.layers[0].gate, params));
}
BENCHMARK(BM_LossAndGrads)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  SyntheticOptions o;
  o.mode = SyntheticMode::kPlanted;
  o.basis_count = 4;
  o.rank = 48;
  const auto s = generate_synthetic(MoEConfig{1, 16, 128, 48, 2, std::nullopt}, o);
  const auto tokens = random_tokens(256, 128, 4);
  const bool compressed = state.range(0) != 0;
  const auto moe = LayerRuntime(s.model, 0);
  const auto mobe = LayerRuntime(*s.truth, 0);
  for (auto _ : state) benchmark::DoNotOptimize(compressed ? mobe.forward(tokens) : moe.forward(tokens));
  state.SetLabel(compressed ? "mobe factorized" : "moe");
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
