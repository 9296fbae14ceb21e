#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace talu {

// Row-major dense shape; empty vector means rank-0 (scalar).
using Shape = std::vector<int64_t>;

// Element count; 1 for rank-0.
int64_t shape_size(const Shape& shape);

// "[2,3,4]" for diagnostics; "[]" for scalars.
std::string shape_str(const Shape& shape);

bool same_shape(const Shape& a, const Shape& b);

// Dense tensor of doubles with an optional gradient buffer. Handles share
// storage: copying a Tensor is O(1) and every copy sees the same values and
// gradient. Values are written at construction and, for parameters, by the
// optimizer between tape runs; ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  // Storage is left unwritten; the caller must assign every element before
  // anything reads the tensor.
  static Tensor uninitialized(Shape shape);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t size() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }

  std::span<const double> data() const;
  // Parameters and loaders write through this; graph ops must not.
  std::span<double> mutable_data();

  // Value of a single-element tensor.
  double item() const;
  // Row-major element access for tests and summaries.
  double at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  // Empty span until backward has accumulated into this tensor.
  std::span<const double> grad() const;
  bool has_grad() const;
  // Allocates a zero gradient buffer on first use.
  std::vector<double>& grad_buffer();
  void zero_grad();
  // Copy of the gradient as a tensor; zeros if none was accumulated.
  Tensor grad_tensor() const;

  // Set by Tape::record on every op output. Ops propagate gradients into a
  // tensor only if it requires grad or was itself produced by an op; pure
  // data leaves (input batches) skip the work.
  bool produced_by_op() const;
  void mark_produced_by_op();
  bool wants_grad() const { return requires_grad() || produced_by_op(); }

  bool diverged() const;
  void mark_diverged();

  // Stable identity of the shared storage, for keying optimizer state.
  const void* id() const;

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

}  // namespace talu
