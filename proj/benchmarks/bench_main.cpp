#include <benchmark/benchmark.h>

#include <random>

#include "pvd/autodiff.hpp"
#include "pvd/geometry.hpp"
#include "pvd/io.hpp"
#include "pvd/metrics.hpp"
#include "pvd/pvnet.hpp"
#include "pvd/training.hpp"

using namespace pvd;

namespace {

Matrix<float> noise(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<float> g;
  Matrix<float> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Args: grid side D, channels (in = out).
void BM_Conv3dForward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  Rng rng(1);
  const Matrix<float> x = noise(d * d * d, c, rng), w = noise(27 * c, c, rng), b = noise(1, c, rng);
  for (auto _ : state) {
    ad::Tape<float> tape(false);
    const ad::Var y = ad::conv3d(tape, tape.constant(x), tape.constant(w), tape.constant(b), d);
    benchmark::DoNotOptimize(tape.value(y).data());
  }
  state.SetItemsProcessed(state.iterations() * d * d * d);
}
BENCHMARK(BM_Conv3dForward)->Args({8, 32})->Args({16, 32})->Args({16, 64})->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  Rng rng(2);
  const Matrix<float> x = noise(d * d * d, c, rng), w = noise(27 * c, c, rng), b = noise(1, c, rng);
  const Matrix<float> probe = noise(d * d * d, c, rng);
  for (auto _ : state) {
    ad::Tape<float> tape(true);
    const ad::Var wv = tape.parameter(w);
    const ad::Var y = ad::conv3d(tape, tape.parameter(x), wv, tape.parameter(b), d);
    tape.backward(ad::weighted_sum(tape, y, probe));
    benchmark::DoNotOptimize(tape.grad(wv).data());
  }
}
BENCHMARK(BM_Conv3dBackward)->Args({16, 32})->Unit(benchmark::kMillisecond);

void BM_DenoiseDesk(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ArchConfig arch = desk_preset();
  const PVNet<float> net(arch, init_parameters<float>(arch, 1, false));
  const PointCloud x = synth_primitive(Primitive::Torus, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.denoise(x, 50).data());
}
BENCHMARK(BM_DenoiseDesk)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_TrainStepDesk(benchmark::State& state) {
  const ArchConfig arch = desk_preset();
  PVNet<float> net(arch, init_parameters<float>(arch, 1));
  AdamState adam = AdamState::for_params(net.params());
  const NoiseSchedule sched = NoiseSchedule::linear(100, 1e-4, 0.1);
  TrainConfig cfg;
  cfg.batch_size = static_cast<int>(state.range(0));
  const std::vector<PointCloud> batch(static_cast<std::size_t>(cfg.batch_size),
                                      synth_primitive(Primitive::Sphere, 128, 4));
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(net, adam, batch, rng, sched, cfg).loss);
}
BENCHMARK(BM_TrainStepDesk)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PointCloud a = synth_primitive(Primitive::Sphere, n, 1), b = synth_primitive(Primitive::Cube, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Chamfer)->RangeMultiplier(4)->Range(128, 2048)->Complexity(benchmark::oNSquared);

void BM_Emd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PointCloud a = synth_primitive(Primitive::Sphere, n, 1), b = synth_primitive(Primitive::Cube, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emd(a, b));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Emd)->RangeMultiplier(2)->Range(64, 512)->Complexity(benchmark::oNCubed)->Unit(benchmark::kMillisecond);

void BM_FarthestPointSample(benchmark::State& state) {
  const PointCloud pc = synth_primitive(Primitive::Torus, static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(farthest_point_sample(pc, static_cast<int>(state.range(0)) / 8).data());
}
BENCHMARK(BM_FarthestPointSample)->Arg(2048)->Arg(8192);

}  // namespace
BENCHMARK_MAIN();
