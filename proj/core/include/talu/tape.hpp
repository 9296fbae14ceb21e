#pragma once

#include <functional>
#include <span>
#include <vector>

#include "talu/tensor.hpp"

namespace talu {

// One recorded operation: its output and the closure that routes the
// output's gradient to each input's buffer.
struct TapeNode {
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(std::span<const double> upstream)> backward;
};

// Reverse-mode autodiff record for one forward computation. Nodes append in
// execution order, so index order is a topological order of the graph; the
// backward pass walks it in reverse. A tape lives for one training step and
// is discarded or cleared afterwards; parameters live outside it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers an op and returns its output unchanged.
  Tensor record(Tensor output, std::vector<Tensor> inputs,
                std::function<void(std::span<const double>)> backward);

  // Seeds d loss / d loss = 1 and sweeps the recorded nodes in reverse,
  // accumulating into the grad buffer of every tensor reached. Nodes whose
  // output never received a gradient are skipped. loss must be a scalar.
  void backward(const Tensor& loss);

  // Drops gradient buffers of every input and output on the tape, so the
  // same tape can replay backward deterministically.
  void zero_grads();

  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<TapeNode> nodes_;
};

}  // namespace talu
