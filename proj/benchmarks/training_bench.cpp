// End-to-end cost of one optimizer step and one inference batch for the
// simple CNN on MNIST-shaped synthetic data, batch 128 in f32: the numbers
// that decide desk-scale epoch time.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "talu/model.hpp"
#include "talu/numeric.hpp"
#include "talu/tape.hpp"
#include "talu/tensor.hpp"
#include "talu/training.hpp"

namespace {

using namespace talu;

ModelConfig mnist_config() {
  ModelConfig cfg;
  cfg.architecture = Architecture::simple;
  cfg.activation.kind = ActivationKind::talu;
  cfg.batchnorm = true;
  cfg.input_h = 28;
  cfg.input_w = 28;
  cfg.input_c = 1;
  cfg.bn_momentum = 0.9;
  return cfg;
}

Tensor random_batch(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor t = Tensor::uninitialized({n, 28, 28, 1});
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

std::vector<int> random_labels(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, 9);
  std::vector<int> labels(n);
  for (int& l : labels) l = dist(rng);
  return labels;
}

void BM_model_train_step(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  Model model = build_model(mnist_config());
  SGD sgd(0.01);
  auto params = model.trainable_params();
  const Tensor batch = random_batch(128, 1);
  const std::vector<int> labels = random_labels(128, 2);
  for (auto _ : state) {
    Tape tape;
    Tensor logits = model.forward(tape, batch, Mode::training);
    Tensor loss = softmax_xent(tape, logits, labels);
    model.zero_grad();
    tape.backward(loss);
    sgd.step(params);
    benchmark::DoNotOptimize(loss.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_model_train_step)->Unit(benchmark::kMillisecond);

void BM_model_inference_batch(benchmark::State& state) {
  NumericModeGuard mode(NumericMode::f32);
  Model model = build_model(mnist_config());
  const Tensor batch = random_batch(128, 1);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(
        model.forward(tape, batch, Mode::inference).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_model_inference_batch)->Unit(benchmark::kMillisecond);

}  // namespace
