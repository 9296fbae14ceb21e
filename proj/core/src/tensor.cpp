#include "talu/tensor.hpp"

#include <algorithm>
#include <memory>
#include <sstream>
#include <utility>

#include "talu/error.hpp"

namespace talu {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace {

// std::allocator with default-initializing construct(), so resize() on the
// value buffer does not zero-fill; zeros() fills explicitly.
template <typename T>
struct NoInitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <typename U>
  void construct(U*) noexcept {}
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace

struct Tensor::Impl {
  Shape shape;
  std::vector<double, NoInitAlloc<double>> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool produced_by_op = false;
  bool diverged = false;
};

static void check_shape(const Shape& shape) {
  for (int64_t d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor dimensions must be positive, got " +
                       shape_str(shape));
    }
  }
}

Tensor Tensor::zeros(Shape shape) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->value.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.impl_->value) v = value;
  return t;
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  check_shape(shape);
  if (static_cast<int64_t>(data.size()) != shape_size(shape)) {
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->value.assign(data.begin(), data.end());
  return Tensor(std::move(impl));
}

Tensor Tensor::uninitialized(Shape shape) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->value.resize(static_cast<size_t>(shape_size(shape)));
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

namespace {

template <typename ImplPtr>
auto& deref(const ImplPtr& impl) {
  if (!impl) throw ContractError("use of a default-constructed tensor");
  return *impl;
}

}  // namespace

const Shape& Tensor::shape() const { return deref(impl_).shape; }

int64_t Tensor::size() const {
  return static_cast<int64_t>(deref(impl_).value.size());
}

std::span<const double> Tensor::data() const { return deref(impl_).value; }

std::span<double> Tensor::mutable_data() { return deref(impl_).value; }

double Tensor::item() const {
  const Impl& impl = deref(impl_);
  if (impl.value.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(impl.shape));
  }
  return impl.value[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  const Impl& impl = deref(impl_);
  if (index.size() != impl.shape.size()) {
    throw ShapeError("at(): " + std::to_string(index.size()) +
                     " indices for shape " + shape_str(impl.shape));
  }
  int64_t flat = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= impl.shape[axis]) {
      throw ShapeError("at(): index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_str(impl.shape));
    }
    flat = flat * impl.shape[axis] + i;
    ++axis;
  }
  return impl.value[static_cast<size_t>(flat)];
}

bool Tensor::requires_grad() const { return deref(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  deref(impl_).requires_grad = value;
  return *this;
}

std::span<const double> Tensor::grad() const { return deref(impl_).grad; }

bool Tensor::has_grad() const { return !deref(impl_).grad.empty(); }

std::vector<double>& Tensor::grad_buffer() {
  Impl& impl = deref(impl_);
  if (impl.grad.empty()) impl.grad.assign(impl.value.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() { deref(impl_).grad.clear(); }

Tensor Tensor::grad_tensor() const {
  const Impl& impl = deref(impl_);
  if (impl.grad.empty()) return Tensor::zeros(impl.shape);
  Tensor g = Tensor::uninitialized(impl.shape);
  std::copy(impl.grad.begin(), impl.grad.end(), g.mutable_data().begin());
  return g;
}

bool Tensor::produced_by_op() const { return deref(impl_).produced_by_op; }

void Tensor::mark_produced_by_op() { deref(impl_).produced_by_op = true; }

bool Tensor::diverged() const { return deref(impl_).diverged; }

void Tensor::mark_diverged() { deref(impl_).diverged = true; }

const void* Tensor::id() const { return impl_.get(); }

}  // namespace talu
