#include "talu/model.hpp"

#include <cmath>
#include <sstream>

#include "talu/error.hpp"

namespace talu {

std::string_view architecture_name(Architecture arch) {
  return arch == Architecture::simple ? "simple" : "residual";
}

std::optional<Architecture> architecture_from_name(std::string_view name) {
  if (name == "simple") return Architecture::simple;
  if (name == "residual") return Architecture::residual;
  return std::nullopt;
}

Tensor Model::forward(Tape& tape, const Tensor& batch, Mode mode) {
  const Shape& in = batch.shape();
  if (in.size() != 4 || in[1] != config_.input_h || in[2] != config_.input_w ||
      in[3] != config_.input_c) {
    throw ShapeError("model expects input [N," + std::to_string(config_.input_h) +
                     "," + std::to_string(config_.input_w) + "," +
                     std::to_string(config_.input_c) + "], got " +
                     shape_str(in));
  }
  std::vector<Tensor> outputs(stages_.size());
  for (size_t s = 0; s < stages_.size(); ++s) {
    Stage& stage = stages_[s];
    std::vector<Tensor> inputs;
    inputs.reserve(stage.inputs.size());
    for (int idx : stage.inputs) {
      inputs.push_back(idx < 0 ? batch : outputs[static_cast<size_t>(idx)]);
    }
    Tensor cur = stage.layers[0]->forward(tape, inputs, mode);
    for (size_t l = 1; l < stage.layers.size(); ++l) {
      Tensor single[] = {cur};
      cur = stage.layers[l]->forward(tape, single, mode);
    }
    outputs[s] = cur;
  }
  return outputs.back();
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (size_t s = 0; s < stages_.size(); ++s) {
    for (auto& layer : stages_[s].layers) {
      for (ParamRef& p : layer->params()) {
        out.push_back({stages_[s].name + "[" + std::to_string(s) + "]/" + p.name,
                       p.tensor, p.trainable});
      }
    }
  }
  return out;
}

std::vector<ParamRef> Model::trainable_params() {
  std::vector<ParamRef> out;
  for (ParamRef& p : params()) {
    if (p.trainable) out.push_back(std::move(p));
  }
  return out;
}

ParamCount Model::param_count() {
  ParamCount count;
  for (ParamRef& p : params()) {
    count.total += p.tensor.size();
    (p.trainable ? count.trainable : count.non_trainable) += p.tensor.size();
  }
  return count;
}

void Model::zero_grad() {
  for (ParamRef& p : params()) p.tensor.zero_grad();
}

bool Model::params_finite() {
  for (ParamRef& p : params()) {
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<Shape> Model::stage_output_shapes() const {
  std::vector<Shape> shapes(stages_.size());
  const Shape input = {1, config_.input_h, config_.input_w, config_.input_c};
  for (size_t s = 0; s < stages_.size(); ++s) {
    const Stage& stage = stages_[s];
    std::vector<Shape> inputs;
    for (int idx : stage.inputs) {
      inputs.push_back(idx < 0 ? input : shapes[static_cast<size_t>(idx)]);
    }
    Shape cur = stage.layers[0]->out_shape(inputs);
    for (size_t l = 1; l < stage.layers.size(); ++l) {
      Shape single[] = {cur};
      cur = stage.layers[l]->out_shape(single);
    }
    shapes[s] = cur;
  }
  for (Shape& s : shapes) s.erase(s.begin());
  return shapes;
}

std::string format_count(int64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  const size_t first = digits[0] == '-' ? 1 : 0;
  for (size_t i = 0; i < digits.size(); ++i) {
    if (i > first && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

namespace {

std::string shape_cell(const Shape& per_sample) {
  std::string out = "(None";
  for (int64_t d : per_sample) out += ", " + std::to_string(d);
  return out + ")";
}

int64_t stage_param_total(Stage& stage) {
  int64_t total = 0;
  for (auto& layer : stage.layers) {
    for (const ParamRef& p : layer->params()) total += p.tensor.size();
  }
  return total;
}

}  // namespace

std::string Model::summary() {
  const std::vector<Shape> shapes = stage_output_shapes();
  bool chain = true;
  for (size_t s = 0; s < stages_.size(); ++s) {
    const std::vector<int>& in = stages_[s].inputs;
    if (in.size() != 1 || in[0] != static_cast<int>(s) - 1) chain = false;
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Layer", "Output Shape", "Param #"});
  if (!chain) rows[0].push_back("Connected to");
  for (size_t s = 0; s < stages_.size(); ++s) {
    std::vector<std::string> row = {stages_[s].name, shape_cell(shapes[s]),
                                    format_count(stage_param_total(stages_[s]))};
    if (!chain) {
      std::string from;
      for (size_t i = 0; i < stages_[s].inputs.size(); ++i) {
        if (i) from += ", ";
        const int idx = stages_[s].inputs[i];
        from += idx < 0 ? "InputLayer" : stages_[static_cast<size_t>(idx)].name;
      }
      row.push_back(from);
    }
    rows.push_back(std::move(row));
  }

  std::vector<size_t> widths(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream out;
  size_t line_width = 0;
  for (size_t c = 0; c < widths.size(); ++c) line_width += widths[c] + 2;
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      std::string cell = rows[r][c];
      cell.resize(widths[c] + 2, ' ');
      out << cell;
    }
    out << '\n';
    if (r == 0) out << std::string(line_width, '=') << '\n';
  }
  const ParamCount count = param_count();
  out << std::string(line_width, '=') << '\n';
  out << "Total params: " << format_count(count.total) << '\n';
  out << "Trainable params: " << format_count(count.trainable) << '\n';
  out << "Non-trainable params: " << format_count(count.non_trainable) << '\n';
  return out.str();
}

namespace {

// conv, optional batchnorm, activation; as one stage for the residual
// architecture, as separate stages for the simple one.
std::vector<std::unique_ptr<Layer>> conv_bundle(const ModelConfig& cfg,
                                                int64_t in_c, int64_t out_c) {
  std::vector<std::unique_ptr<Layer>> layers;
  layers.push_back(std::make_unique<Conv2D>(3, 3, in_c, out_c));
  if (cfg.batchnorm) {
    layers.push_back(
        std::make_unique<BatchNorm>(out_c, cfg.bn_epsilon, cfg.bn_momentum));
  }
  layers.push_back(std::make_unique<ActivationLayer>(cfg.activation));
  return layers;
}

Stage single(std::string name, std::unique_ptr<Layer> layer, int input) {
  Stage stage;
  stage.name = std::move(name);
  stage.layers.push_back(std::move(layer));
  stage.inputs = {input};
  return stage;
}

}  // namespace

Model build_simple_cnn(const ModelConfig& cfg) {
  if (cfg.input_h < 8 || cfg.input_w < 8) {
    throw ShapeError("simple architecture pools three times; input " +
                     std::to_string(cfg.input_h) + "x" +
                     std::to_string(cfg.input_w) + " is too small");
  }
  std::vector<Stage> stages;
  auto last = [&] { return static_cast<int>(stages.size()) - 1; };
  auto push_conv_block = [&](int64_t in_c, int64_t out_c) {
    stages.push_back(single("Conv2D", std::make_unique<Conv2D>(3, 3, in_c, out_c),
                            last()));
    if (cfg.batchnorm) {
      stages.push_back(single(
          "BatchNorm",
          std::make_unique<BatchNorm>(out_c, cfg.bn_epsilon, cfg.bn_momentum),
          last()));
    }
    stages.push_back(
        single(std::string(activation_display_name(cfg.activation.kind)),
               std::make_unique<ActivationLayer>(cfg.activation), last()));
  };

  int64_t c = cfg.input_c;
  int64_t h = cfg.input_h, w = cfg.input_w;
  for (int64_t filters : {int64_t{32}, int64_t{64}, int64_t{128}}) {
    push_conv_block(c, filters);
    c = filters;
    push_conv_block(c, filters);
    stages.push_back(single("MaxPooling2D", std::make_unique<MaxPool2D>(), last()));
    h = (h - 2) / 2 + 1;
    w = (w - 2) / 2 + 1;
  }
  stages.push_back(single("Flatten", std::make_unique<FlattenLayer>(), last()));
  const int64_t flat = h * w * c;
  stages.push_back(single("Dense", std::make_unique<Dense>(flat, 128), last()));
  if (cfg.batchnorm) {
    stages.push_back(single(
        "BatchNorm",
        std::make_unique<BatchNorm>(128, cfg.bn_epsilon, cfg.bn_momentum),
        last()));
  }
  stages.push_back(
      single(std::string(activation_display_name(cfg.activation.kind)),
             std::make_unique<ActivationLayer>(cfg.activation), last()));
  stages.push_back(
      single("Dense", std::make_unique<Dense>(128, cfg.classes), last()));

  Model model;
  model.config_ = cfg;
  model.stages_ = std::move(stages);
  Rng rng(cfg.seed);
  for (Stage& stage : model.stages_) {
    for (auto& layer : stage.layers) layer->init(rng);
  }
  return model;
}

Model build_residual_cnn(const ModelConfig& cfg) {
  std::vector<Stage> stages;
  auto conv_stage = [&](std::string name, int64_t in_c, int input) {
    Stage stage;
    stage.name = std::move(name);
    stage.layers = conv_bundle(cfg, in_c, 32);
    stage.inputs = {input};
    stages.push_back(std::move(stage));
  };
  auto add_stage = [&](std::string name, int a, int b) {
    Stage stage;
    stage.name = std::move(name);
    stage.layers.push_back(std::make_unique<AddLayer>());
    stage.inputs = {a, b};
    stages.push_back(std::move(stage));
  };

  conv_stage("Conv2D1", cfg.input_c, -1);  // 0
  conv_stage("Conv2D2", 32, 0);            // 1
  conv_stage("Conv2D3", 32, 1);            // 2
  add_stage("Add1", 0, 2);                 // 3
  conv_stage("Conv2D4", 32, 3);            // 4
  conv_stage("Conv2D5", 32, 4);            // 5
  add_stage("Add2", 3, 5);                 // 6
  conv_stage("Conv2D6", 32, 6);            // 7
  conv_stage("Conv2D7", 32, 7);            // 8
  add_stage("Add3", 6, 8);                 // 9

  Stage flat;
  flat.name = "Flatten";
  flat.layers.push_back(std::make_unique<FlattenLayer>());
  flat.inputs = {9};
  stages.push_back(std::move(flat));  // 10

  Stage dense1;
  dense1.name = "Dense1";
  dense1.layers.push_back(
      std::make_unique<Dense>(cfg.input_h * cfg.input_w * 32, 128));
  if (cfg.batchnorm) {
    dense1.layers.push_back(
        std::make_unique<BatchNorm>(128, cfg.bn_epsilon, cfg.bn_momentum));
  }
  dense1.layers.push_back(std::make_unique<ActivationLayer>(cfg.activation));
  dense1.inputs = {10};
  stages.push_back(std::move(dense1));  // 11

  Stage dense2;
  dense2.name = "Dense2";
  dense2.layers.push_back(std::make_unique<Dense>(128, cfg.classes));
  dense2.inputs = {11};
  stages.push_back(std::move(dense2));  // 12

  Model model;
  model.config_ = cfg;
  model.stages_ = std::move(stages);
  Rng rng(cfg.seed);
  for (Stage& stage : model.stages_) {
    for (auto& layer : stage.layers) layer->init(rng);
  }
  return model;
}

Model build_model(const ModelConfig& cfg) {
  return cfg.architecture == Architecture::simple ? build_simple_cnn(cfg)
                                                  : build_residual_cnn(cfg);
}

}  // namespace talu
