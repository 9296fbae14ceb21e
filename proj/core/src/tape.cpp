#include "talu/tape.hpp"

#include <utility>

#include "talu/error.hpp"

namespace talu {

Tensor Tape::record(Tensor output, std::vector<Tensor> inputs,
                    std::function<void(std::span<const double>)> backward) {
  output.mark_produced_by_op();
  TapeNode node;
  node.inputs = std::move(inputs);
  node.output = output;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape())
                                        : std::string("an undefined tensor")));
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
}

void Tape::zero_grads() {
  for (TapeNode& node : nodes_) {
    node.output.zero_grad();
    for (Tensor& input : node.inputs) input.zero_grad();
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace talu
