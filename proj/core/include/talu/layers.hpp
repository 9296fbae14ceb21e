#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "talu/activations.hpp"
#include "talu/ops.hpp"
#include "talu/rng.hpp"
#include "talu/tape.hpp"
#include "talu/tensor.hpp"

namespace talu {

enum class Mode { training, inference };

struct ParamRef {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

struct ParamCount {
  int64_t total = 0;
  int64_t trainable = 0;
  int64_t non_trainable = 0;
};

// Expected parameter sizes, used by the summary and asserted in tests.
int64_t conv2d_param_count(int64_t kh, int64_t kw, int64_t in_c, int64_t out_c);
int64_t dense_param_count(int64_t in, int64_t out);

class Layer {
 public:
  virtual ~Layer() = default;
  // inputs.size() must equal arity(). Weight layers honour Mode; batchnorm
  // is the only layer that behaves differently between the two.
  virtual Tensor forward(Tape& tape, std::span<const Tensor> inputs,
                         Mode mode) = 0;
  virtual Shape out_shape(std::span<const Shape> inputs) const = 0;
  virtual int arity() const { return 1; }
  virtual std::vector<ParamRef> params() { return {}; }
  virtual void init(Rng&) {}
  virtual std::string_view type_name() const = 0;
};

// 3x3-style NHWC convolution, Glorot-uniform kernel, zero bias.
class Conv2D final : public Layer {
 public:
  Conv2D(int64_t kh, int64_t kw, int64_t in_c, int64_t out_c,
         Padding padding = Padding::same, int64_t stride = 1);
  void init(Rng& rng) override;
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::vector<ParamRef> params() override;
  std::string_view type_name() const override { return "Conv2D"; }
  const Tensor& kernel() const { return kernel_; }
  const Tensor& bias() const { return bias_; }

 private:
  int64_t kh_, kw_, in_c_, out_c_;
  Padding padding_;
  int64_t stride_;
  Tensor kernel_, bias_;
};

// Fully connected, Glorot-uniform weight, zero bias.
class Dense final : public Layer {
 public:
  Dense(int64_t in, int64_t out);
  void init(Rng& rng) override;
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::vector<ParamRef> params() override;
  std::string_view type_name() const override { return "Dense"; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  int64_t in_, out_;
  Tensor weight_, bias_;
};

// Normalizes over the last axis. Training uses biased batch statistics and
// folds them into the moving estimates; inference uses the moving estimates
// and never writes them. Training requires at least 2 rows per channel.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int64_t channels, double epsilon = 1e-3,
                     double momentum = 0.99);
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::vector<ParamRef> params() override;
  std::string_view type_name() const override { return "BatchNorm"; }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }
  const Tensor& moving_mean() const { return moving_mean_; }
  const Tensor& moving_var() const { return moving_var_; }

 private:
  int64_t channels_;
  double epsilon_, momentum_;
  Tensor gamma_, beta_, moving_mean_, moving_var_;
};

class MaxPool2D final : public Layer {
 public:
  explicit MaxPool2D(int64_t window = 2, int64_t stride = 2);
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::string_view type_name() const override { return "MaxPooling2D"; }

 private:
  int64_t window_, stride_;
};

class FlattenLayer final : public Layer {
 public:
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::string_view type_name() const override { return "Flatten"; }
};

// Two-input elementwise sum for residual connections.
class AddLayer final : public Layer {
 public:
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  int arity() const override { return 2; }
  std::string_view type_name() const override { return "Add"; }
};

// Activation as a layer. talu and prelu own one trainable scalar.
class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(const ActivationSpec& spec);
  Tensor forward(Tape& tape, std::span<const Tensor> inputs, Mode mode) override;
  Shape out_shape(std::span<const Shape> inputs) const override;
  std::vector<ParamRef> params() override;
  std::string_view type_name() const override;
  const ActivationSpec& spec() const { return spec_; }
  // Defined only when the activation is trainable.
  const Tensor& param() const { return param_; }

 private:
  ActivationSpec spec_;
  Tensor param_;
};

}  // namespace talu
