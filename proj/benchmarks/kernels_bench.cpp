// Microbenchmarks for the kernels that dominate training time, at the
// shapes the MNIST simple CNN actually runs: conv blocks at 28x28 and
// 14x14, the wide first dense layer, 2x2 pooling and batchnorm. All run
// in f32 mode, matching training.

#include <benchmark/benchmark.h>

#include <random>

#include "talu/activations.hpp"
#include "talu/layers.hpp"
#include "talu/numeric.hpp"
#include "talu/ops.hpp"
#include "talu/tape.hpp"
#include "talu/tensor.hpp"

namespace {

using namespace talu;

Tensor random_tensor(Shape shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor t = Tensor::uninitialized(std::move(shape));
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

void BM_matmul_conv_shape(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor a = random_tensor({784, 288}, 1);
  const Tensor b = random_tensor({288, 64}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape, a, b));
  }
}
BENCHMARK(BM_matmul_conv_shape)->Unit(benchmark::kMicrosecond);

void BM_matmul_dense_shape(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor a = random_tensor({128, 6272}, 1);
  const Tensor b = random_tensor({6272, 128}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape, a, b));
  }
}
BENCHMARK(BM_matmul_dense_shape)->Unit(benchmark::kMillisecond);

void BM_conv2d_forward(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const int64_t c = state.range(0);
  const int64_t hw = state.range(1);
  const Tensor x = random_tensor({128, hw, hw, c}, 1);
  const Tensor k = random_tensor({3, 3, c, 2 * c}, 2);
  const Tensor b = random_tensor({2 * c}, 3);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(conv2d(tape, x, k, b));
  }
}
BENCHMARK(BM_conv2d_forward)
    ->Args({32, 28})
    ->Args({64, 14})
    ->Unit(benchmark::kMillisecond);

void BM_conv2d_train_step(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  Tensor x = random_tensor({128, 14, 14, 32}, 1);
  Tensor k = random_tensor({3, 3, 32, 64}, 2);
  Tensor b = random_tensor({64}, 3);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = sum(tape, conv2d(tape, x, k, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(k.grad().data());
    x.zero_grad();
    k.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_conv2d_train_step)->Unit(benchmark::kMillisecond);

void BM_maxpool2d(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor x = random_tensor({128, 28, 28, 32}, 1);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(maxpool2d(tape, x));
  }
}
BENCHMARK(BM_maxpool2d)->Unit(benchmark::kMicrosecond);

void BM_batchnorm_training(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor x = random_tensor({128, 14, 14, 64}, 1);
  BatchNorm bn(64);
  const Tensor inputs[] = {x};
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(bn.forward(tape, inputs, Mode::training));
  }
}
BENCHMARK(BM_batchnorm_training)->Unit(benchmark::kMicrosecond);

void activation_bench(benchmark::State& state, ActivationKind kind) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor x = random_tensor({128, 28, 28, 32}, 1);
  ActivationSpec spec;
  spec.kind = kind;
  for (auto _ : state) {
    benchmark::DoNotOptimize(act_forward(spec, x));
  }
}

void BM_talu_forward(benchmark::State& state) {
  activation_bench(state, ActivationKind::talu);
}
BENCHMARK(BM_talu_forward)->Unit(benchmark::kMicrosecond);

void BM_relu_forward(benchmark::State& state) {
  activation_bench(state, ActivationKind::relu);
}
BENCHMARK(BM_relu_forward)->Unit(benchmark::kMicrosecond);

void BM_talu_backward(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  const Tensor x = random_tensor({128, 28, 28, 32}, 1);
  const Tensor up = random_tensor({128, 28, 28, 32}, 2);
  ActivationSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(act_backward(spec, x, up));
  }
}
BENCHMARK(BM_talu_backward)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
