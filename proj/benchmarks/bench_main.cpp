#include <benchmark/benchmark.h>

#include "hcim/crossbar.hpp"
#include "hcim/device.hpp"
#include "hcim/mixer.hpp"

using namespace hcim;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_Mvm(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  AnalogueMatrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(n), DeviceConfig{});
  m.program_ideal(random_matrix(n, n, rng));
  const Eigen::VectorXd x = random_matrix(n, 1, rng).col(0);
  const ConverterConfig conv;
  for (auto _ : state) benchmark::DoNotOptimize(m.mvm(x, &rng, conv));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_Mvm)->Arg(32)->Arg(96)->Arg(256);

void BM_WriteVerify(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  const Eigen::MatrixXd w = random_matrix(n, n, rng);
  for (auto _ : state) {
    AnalogueMatrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(n), DeviceConfig{});
    benchmark::DoNotOptimize(m.program(w, 1.0, rng));
  }
  state.SetItemsProcessed(state.iterations() * n * n * 2);
}
BENCHMARK(BM_WriteVerify)->Arg(32)->Arg(64);

void BM_MixerForward(benchmark::State& state) {
  Rng rng(3);
  MixerClassifier m(MixerConfig{}, rng);
  const Eigen::MatrixXd x = random_matrix(64 * 64, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MixerForward)->Arg(1)->Arg(16);

}  // namespace
BENCHMARK_MAIN();
