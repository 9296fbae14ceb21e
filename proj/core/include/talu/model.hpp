#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "talu/layers.hpp"

namespace talu {

enum class Architecture { simple, residual };

std::string_view architecture_name(Architecture arch);
std::optional<Architecture> architecture_from_name(std::string_view name);

struct ModelConfig {
  Architecture architecture = Architecture::simple;
  ActivationSpec activation;
  bool batchnorm = false;
  int64_t input_h = 32;
  int64_t input_w = 32;
  int64_t input_c = 3;
  int64_t classes = 10;
  uint64_t seed = 0;
  double bn_epsilon = 1e-3;
  double bn_momentum = 0.99;
};

// One summary row: a named bundle of layers applied in order, fed by the
// outputs of earlier stages. Input index -1 is the model input; the first
// layer of a stage consumes all stage inputs, later layers chain.
struct Stage {
  std::string name;
  std::vector<std::unique_ptr<Layer>> layers;
  std::vector<int> inputs;
};

class Model {
 public:
  // Logits [N, classes]; softmax lives in the loss.
  Tensor forward(Tape& tape, const Tensor& batch, Mode mode);

  const ModelConfig& config() const { return config_; }
  const std::vector<Stage>& stages() const { return stages_; }

  // Stable order: stage by stage, layer by layer. Names look like
  // "Conv2D[0]/kernel".
  std::vector<ParamRef> params();
  std::vector<ParamRef> trainable_params();
  ParamCount param_count();

  void zero_grad();
  bool params_finite();

  // Per-sample shape a stage emits, batch axis omitted.
  std::vector<Shape> stage_output_shapes() const;

  // Keras-style table: layer rows with output shapes and parameter counts,
  // a Connected-to column when the graph is not a chain, and total /
  // trainable / non-trainable footer lines.
  std::string summary();

 private:
  friend Model build_simple_cnn(const ModelConfig& config);
  friend Model build_residual_cnn(const ModelConfig& config);
  ModelConfig config_;
  std::vector<Stage> stages_;
};

// Plain convolutional stack: three blocks of two 3x3 convolutions (32, 64,
// 128 filters) each followed by 2x2 max pooling, then Dense 128 and the
// classifier head. Activations sit after every convolution and after the
// hidden dense layer; with batchnorm enabled the order is conv/dense,
// batchnorm, activation.
Model build_simple_cnn(const ModelConfig& config);

// Seven 3x3 convolutions of 32 filters at full resolution with three
// two-conv residual blocks, then Dense 128 and the classifier head. Each
// numbered convolution stage bundles its batchnorm and activation.
Model build_residual_cnn(const ModelConfig& config);

Model build_model(const ModelConfig& config);

// "550,577" style.
std::string format_count(int64_t n);

}  // namespace talu
