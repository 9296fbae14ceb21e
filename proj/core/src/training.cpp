#include "talu/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "talu/error.hpp"
#include "talu/numeric.hpp"
#include "talu/rng.hpp"

namespace talu {

namespace {

void check_labels_against(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_xent: logits must be [N,K], got " +
                     shape_str(logits.shape()));
  }
  const int64_t n = logits.shape()[0], k = logits.shape()[1];
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_str(logits.shape()));
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw DataError("softmax_xent: label " + std::to_string(labels[i]) +
                      " at row " + std::to_string(i) + " is outside [0," +
                      std::to_string(k) + ")");
    }
  }
}

// Fills probs with row softmax and returns the mean negative log likelihood.
template <typename T>
double xent_forward(std::span<const double> logits, std::span<const int> labels,
                    int64_t n, int64_t k, std::span<double> probs) {
  T total = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * k;
    T row_max = static_cast<T>(row[0]);
    for (int64_t j = 1; j < k; ++j) {
      row_max = std::max(row_max, static_cast<T>(row[j]));
    }
    T denom = T(0);
    for (int64_t j = 0; j < k; ++j) {
      denom += std::exp(static_cast<T>(row[j]) - row_max);
    }
    for (int64_t j = 0; j < k; ++j) {
      probs[i * k + j] = static_cast<double>(
          std::exp(static_cast<T>(row[j]) - row_max) / denom);
    }
    const T z = static_cast<T>(row[labels[i]]) - row_max;
    total += std::log(denom) - z;
  }
  return static_cast<double>(total / static_cast<T>(n));
}

}  // namespace

Tensor softmax_xent(Tape& tape, const Tensor& logits,
                    std::span<const int> labels) {
  check_labels_against(logits, labels);
  const int64_t n = logits.shape()[0], k = logits.shape()[1];
  std::vector<double> probs(static_cast<size_t>(n * k));
  double loss;
  if (numeric_mode() == NumericMode::f32) {
    loss = xent_forward<float>(logits.data(), labels, n, k, probs);
  } else {
    loss = xent_forward<double>(logits.data(), labels, n, k, probs);
  }
  Tensor out = Tensor::scalar(loss);
  Tensor in = logits;
  std::vector<int> labels_copy(labels.begin(), labels.end());
  return tape.record(out, {logits},
                     [in, labels_copy = std::move(labels_copy), probs = std::move(probs),
                      n, k](std::span<const double> up) mutable {
    if (!in.wants_grad()) return;
    double* dx = in.grad_buffer().data();
    const double scale = up[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < k; ++j) {
        const double onehot = labels_copy[static_cast<size_t>(i)] == j ? 1.0 : 0.0;
        dx[i * k + j] += scale * (probs[static_cast<size_t>(i * k + j)] - onehot);
      }
    }
  });
}

double accuracy_percent(const Tensor& logits, std::span<const int> labels) {
  check_labels_against(logits, labels);
  const int64_t n = logits.shape()[0], k = logits.shape()[1];
  std::span<const double> v = logits.data();
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (v[i * k + j] > v[i * k + best]) best = j;
    }
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

SGD::SGD(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {}

namespace {

template <typename T>
void sgd_update(std::span<double> value, std::span<const double> grad,
                std::vector<double>& velocity, double lr, double momentum) {
  for (size_t i = 0; i < value.size(); ++i) {
    const T g = grad.empty() ? T(0) : static_cast<T>(grad[i]);
    const T v = static_cast<T>(momentum) * static_cast<T>(velocity[i]) -
                static_cast<T>(lr) * g;
    velocity[i] = static_cast<double>(v);
    value[i] = static_cast<double>(static_cast<T>(value[i]) + v);
  }
}

}  // namespace

bool SGD::step(std::span<ParamRef> params) {
  for (ParamRef& p : params) {
    if (!p.trainable) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  const bool f32 = numeric_mode() == NumericMode::f32;
  for (ParamRef& p : params) {
    if (!p.trainable) continue;
    auto [it, inserted] = velocity_.try_emplace(p.tensor.id());
    if (inserted) it->second.assign(static_cast<size_t>(p.tensor.size()), 0.0);
    if (f32) {
      sgd_update<float>(p.tensor.mutable_data(), p.tensor.grad(), it->second,
                        learning_rate_, momentum_);
    } else {
      sgd_update<double>(p.tensor.mutable_data(), p.tensor.grad(), it->second,
                         learning_rate_, momentum_);
    }
  }
  return true;
}

std::string_view split_name(Split split) {
  return split == Split::train ? "train" : "test";
}

std::string run_record_csv_header() { return "epoch,split,loss,accuracy,diverged"; }

std::string run_record_csv_row(const RunRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.2f,%d", r.epoch,
                split_name(r.split).data(), r.loss, r.accuracy,
                r.diverged ? 1 : 0);
  return buf;
}

bool detect_divergence(std::span<const double> losses,
                       std::span<const double> train_accuracies,
                       double loss_cap) {
  if (losses.empty()) return false;
  const double latest = losses.back();
  if (!std::isfinite(latest) || latest > loss_cap) return true;
  if (train_accuracies.size() >= 5 && train_accuracies.back() <= 10.5 &&
      latest > 10.0 * losses.front()) {
    return true;
  }
  return false;
}

namespace {

// Split chunked into ready-made batch tensors so repeated evaluations (one
// per epoch) skip rebuilding identical inputs.
struct EvalBatches {
  std::vector<Tensor> batches;
  std::vector<std::span<const int>> labels;
  int64_t total = 0;
};

EvalBatches chunk_split(const Dataset& data, int64_t batch_size) {
  if (data.size() == 0) throw DataError(data.name + ": empty split");
  if (batch_size < 1) {
    throw ContractError("evaluate: batch_size must be positive");
  }
  EvalBatches out;
  out.total = data.size();
  std::vector<int64_t> indices;
  for (int64_t start = 0; start < data.size(); start += batch_size) {
    const int64_t stop = std::min(start + batch_size, data.size());
    indices.resize(static_cast<size_t>(stop - start));
    std::iota(indices.begin(), indices.end(), start);
    out.batches.push_back(data.batch(indices));
    out.labels.push_back({data.labels.data() + start,
                          static_cast<size_t>(stop - start)});
  }
  return out;
}

EvalResult evaluate_batches(Model& model, const EvalBatches& split) {
  EvalResult result;
  double loss_sum = 0;
  int64_t correct_weighted = 0;
  for (size_t i = 0; i < split.batches.size(); ++i) {
    const Tensor& batch = split.batches[i];
    const std::span<const int> labels = split.labels[i];
    const double n = static_cast<double>(labels.size());
    Tape tape;
    Tensor logits = model.forward(tape, batch, Mode::inference);
    Tensor loss = softmax_xent(tape, logits, labels);
    loss_sum += loss.item() * n;
    correct_weighted +=
        std::llround(accuracy_percent(logits, labels) * n / 100.0);
  }
  result.loss = loss_sum / static_cast<double>(split.total);
  result.accuracy = 100.0 * static_cast<double>(correct_weighted) /
                    static_cast<double>(split.total);
  return result;
}

}  // namespace

EvalResult evaluate(Model& model, const Dataset& data, int64_t batch_size) {
  return evaluate_batches(model, chunk_split(data, batch_size));
}

namespace {

// Distinct stream from weight init, which consumes Rng(seed) on its own.
constexpr uint64_t kShuffleStream = 0x517cc1b727220a95ull;

}  // namespace

std::vector<RunRecord> train(Model& model, const Dataset& train_data,
                             const Dataset& test_data, const TrainConfig& cfg,
                             const std::function<void(const RunRecord&)>& on_record) {
  if (train_data.size() == 0 || test_data.size() == 0) {
    throw DataError("train: empty split");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ContractError("train: epochs and batch_size must be positive");
  }

  std::vector<RunRecord> records;
  auto emit = [&](const RunRecord& r) {
    records.push_back(r);
    if (on_record) on_record(r);
  };
  auto synthesize_from = [&](int epoch) {
    const double chance = 100.0 / static_cast<double>(kNumClasses);
    for (int e = epoch; e <= cfg.epochs; ++e) {
      for (Split split : {Split::train, Split::test}) {
        emit({e, split, std::numeric_limits<double>::quiet_NaN(), chance, true});
      }
    }
  };

  SGD optimizer(cfg.learning_rate, cfg.momentum);
  std::vector<ParamRef> params = model.trainable_params();
  Rng shuffle_rng(cfg.seed ^ kShuffleStream);
  std::vector<int64_t> order(static_cast<size_t>(train_data.size()));
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> epoch_losses;
  std::vector<double> epoch_accuracies;
  std::vector<int64_t> batch_indices;
  std::vector<int> batch_labels;
  const EvalBatches eval_train = chunk_split(train_data, cfg.batch_size);
  const EvalBatches eval_test = chunk_split(test_data, cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::vector<double> batch_losses;
    bool exploded = false;
    for (int64_t start = 0; start < train_data.size() && !exploded;
         start += cfg.batch_size) {
      const int64_t stop = std::min(start + cfg.batch_size, train_data.size());
      batch_indices.assign(order.begin() + start, order.begin() + stop);
      batch_labels.resize(batch_indices.size());
      for (size_t i = 0; i < batch_indices.size(); ++i) {
        batch_labels[i] =
            train_data.labels[static_cast<size_t>(batch_indices[i])];
      }
      Tensor batch = train_data.batch(batch_indices);
      Tape tape;
      Tensor logits = model.forward(tape, batch, Mode::training);
      Tensor loss = softmax_xent(tape, logits, batch_labels);
      model.zero_grad();
      tape.backward(loss);
      const bool stepped = optimizer.step(params);
      batch_losses.push_back(loss.item());
      if (!stepped || detect_divergence(batch_losses, {}, cfg.loss_cap)) {
        exploded = true;
      }
    }
    if (exploded) {
      synthesize_from(epoch);
      return records;
    }

    const EvalResult on_train = evaluate_batches(model, eval_train);
    const EvalResult on_test = evaluate_batches(model, eval_test);
    const double mean_loss =
        std::accumulate(batch_losses.begin(), batch_losses.end(), 0.0) /
        static_cast<double>(batch_losses.size());
    epoch_losses.push_back(mean_loss);
    epoch_accuracies.push_back(on_train.accuracy);
    const bool diverged =
        detect_divergence(epoch_losses, epoch_accuracies, cfg.loss_cap);
    emit({epoch, Split::train, on_train.loss, on_train.accuracy, diverged});
    emit({epoch, Split::test, on_test.loss, on_test.accuracy, diverged});
    if (diverged) {
      synthesize_from(epoch + 1);
      return records;
    }
  }
  return records;
}

}  // namespace talu
