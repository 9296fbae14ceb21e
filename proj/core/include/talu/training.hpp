#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "talu/datasets.hpp"
#include "talu/model.hpp"
#include "talu/tape.hpp"
#include "talu/tensor.hpp"

namespace talu {

// Mean negative log softmax probability of the labels; max-subtracted for
// stability. logits [N, K], labels N values in [0, K).
Tensor softmax_xent(Tape& tape, const Tensor& logits,
                    std::span<const int> labels);

// Percent of rows whose argmax logit (first max wins) equals the label.
double accuracy_percent(const Tensor& logits, std::span<const int> labels);

// Momentum SGD where the velocity absorbs the learning rate:
// v <- momentum * v - lr * g, p <- p + v.
class SGD {
 public:
  explicit SGD(double learning_rate, double momentum = 0.9);

  // One update over the trainable parameters. When any gradient is
  // non-finite the whole step is skipped and false comes back; parameters
  // and velocities stay untouched.
  bool step(std::span<ParamRef> params);

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

 private:
  double learning_rate_;
  double momentum_;
  std::unordered_map<const void*, std::vector<double>> velocity_;
};

enum class Split { train, test };
std::string_view split_name(Split split);

// One evaluation of one split after one epoch of training.
struct RunRecord {
  int epoch = 0;  // 1-based
  Split split = Split::train;
  double loss = 0;
  double accuracy = 0;  // percent
  bool diverged = false;
};

std::string run_record_csv_header();
std::string run_record_csv_row(const RunRecord& record);

struct TrainConfig {
  int epochs = 25;
  int64_t batch_size = 512;
  double learning_rate = 0.01;
  double momentum = 0.9;
  uint64_t seed = 0;
  double loss_cap = 1e4;  // any loss above this counts as divergence
};

// True when the loss history, and optionally the per-epoch training
// accuracies, look like a run that exploded: the latest loss is non-finite
// or above the cap, or after five epochs accuracy is still at chance while
// the loss has grown tenfold.
bool detect_divergence(std::span<const double> losses,
                       std::span<const double> train_accuracies = {},
                       double loss_cap = 1e4);

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

// Inference pass over a whole split, chunked by batch_size.
EvalResult evaluate(Model& model, const Dataset& data, int64_t batch_size);

// Epoch loop: shuffle, batched SGD steps, then an inference evaluation of
// the train and test splits (two records per epoch, train first). A run
// that diverges stops updating but still emits 2 * epochs records; the
// synthesized remainder carries loss nan, chance accuracy and the diverged
// flag. on_record fires as each record is produced.
std::vector<RunRecord> train(
    Model& model, const Dataset& train_data, const Dataset& test_data,
    const TrainConfig& config,
    const std::function<void(const RunRecord&)>& on_record = {});

}  // namespace talu
