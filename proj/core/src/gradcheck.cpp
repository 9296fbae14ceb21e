#include "talu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

#include "talu/activations.hpp"
#include "talu/error.hpp"
#include "talu/layers.hpp"
#include "talu/numeric.hpp"
#include "talu/ops.hpp"
#include "talu/rng.hpp"
#include "talu/tape.hpp"
#include "talu/training.hpp"

namespace talu {

namespace {

constexpr double kStep = 1e-5;
constexpr double kKinkMargin = 1e-3;
constexpr int kMaxProbes = 400;

struct Setup {
  double tolerance = 1e-5;
  std::vector<Tensor> check;
  std::function<Tensor(Tape&)> loss;
};

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Uniform in [lo, hi] but at least margin away from zero, for inputs to
// activations that branch there.
Tensor random_away_from_zero(Shape shape, Rng& rng, double lo, double hi,
                             double margin) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) {
    do {
      v = rng.uniform(lo, hi);
    } while (std::abs(v) < margin);
  }
  return t;
}

Setup make_activation_setup(ActivationKind kind, Rng& rng) {
  Setup setup;
  ActivationSpec spec;
  spec.kind = kind;
  const bool kinked =
      kind != ActivationKind::gelu && kind != ActivationKind::swish &&
      kind != ActivationKind::softplus;
  Tensor x = kinked
                 ? random_away_from_zero({200}, rng, -4.0, 4.0, 2 * kKinkMargin)
                 : random_tensor({200}, rng, -4.0, 4.0);
  x.set_requires_grad(true);
  Tensor weight = random_tensor({200}, rng, -1.0, 1.0);
  Tensor param;
  if (spec.trainable_params() > 0) {
    const double init = kind == ActivationKind::talu ? rng.uniform(0.3, 1.2)
                                                     : rng.uniform(0.1, 0.5);
    param = Tensor::scalar(init).set_requires_grad(true);
  }
  setup.check = {x};
  if (param.defined()) setup.check.push_back(param);
  setup.loss = [x, weight, spec, param](Tape& tape) {
    return sum(tape, mul(tape, activation(tape, x, spec, param), weight));
  };
  return setup;
}

Setup make_matmul_setup(Rng& rng) {
  Setup setup;
  Tensor a = random_tensor({10, 7}, rng, -1.0, 1.0).set_requires_grad(true);
  Tensor b = random_tensor({7, 9}, rng, -1.0, 1.0).set_requires_grad(true);
  Tensor weight = random_tensor({10, 9}, rng, -1.0, 1.0);
  setup.check = {a, b};
  setup.loss = [a, b, weight](Tape& tape) {
    return sum(tape, mul(tape, matmul(tape, a, b), weight));
  };
  return setup;
}

Setup make_dense_setup(Rng& rng) {
  Setup setup;
  auto layer = std::make_shared<Dense>(9, 5);
  layer->init(rng);
  Tensor x = random_tensor({6, 9}, rng, -1.0, 1.0).set_requires_grad(true);
  Tensor weight = random_tensor({6, 5}, rng, -1.0, 1.0);
  setup.check = {x, layer->weight(), layer->bias()};
  setup.loss = [layer, x, weight](Tape& tape) {
    Tensor in[] = {x};
    return sum(tape, mul(tape, layer->forward(tape, in, Mode::inference), weight));
  };
  return setup;
}

Setup make_conv2d_setup(Rng& rng) {
  Setup setup;
  Tensor x =
      random_tensor({2, 6, 5, 3}, rng, -1.0, 1.0).set_requires_grad(true);
  Tensor kernel =
      random_tensor({3, 3, 3, 4}, rng, -0.5, 0.5).set_requires_grad(true);
  Tensor bias = random_tensor({4}, rng, -0.5, 0.5).set_requires_grad(true);
  Tensor w_same = random_tensor({2, 6, 5, 4}, rng, -1.0, 1.0);
  Tensor w_valid = random_tensor({2, 2, 2, 4}, rng, -1.0, 1.0);
  setup.check = {x, kernel, bias};
  setup.loss = [x, kernel, bias, w_same, w_valid](Tape& tape) {
    Tensor same =
        sum(tape, mul(tape, conv2d(tape, x, kernel, bias, Padding::same, 1),
                      w_same));
    Tensor valid =
        sum(tape, mul(tape, conv2d(tape, x, kernel, bias, Padding::valid, 2),
                      w_valid));
    return add(tape, same, valid);
  };
  return setup;
}

Setup make_maxpool_setup(Rng& rng) {
  Setup setup;
  Tensor x = random_tensor({2, 6, 6, 3}, rng, 0.0, 1.0);
  // Finite differences flip the argmax when two window entries almost tie;
  // spread any close pair apart before probing.
  std::span<double> v = x.mutable_data();
  const int64_t h = 6, w = 6, c = 3;
  for (int retry = 0; retry < 100; ++retry) {
    bool clean = true;
    for (int64_t img = 0; img < 2; ++img) {
      for (int64_t oy = 0; oy < 3; ++oy) {
        for (int64_t ox = 0; ox < 3; ++ox) {
          for (int64_t ch = 0; ch < c; ++ch) {
            double best = -1, second = -1;
            for (int64_t dy = 0; dy < 2; ++dy) {
              for (int64_t dx = 0; dx < 2; ++dx) {
                const int64_t idx =
                    ((img * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                if (v[idx] > best) {
                  second = best;
                  best = v[idx];
                } else if (v[idx] > second) {
                  second = v[idx];
                }
              }
            }
            if (best - second < 2 * kKinkMargin) {
              clean = false;
              for (int64_t dy = 0; dy < 2; ++dy) {
                for (int64_t dx = 0; dx < 2; ++dx) {
                  const int64_t idx =
                      ((img * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                  v[idx] = rng.uniform(0.0, 1.0);
                }
              }
            }
          }
        }
      }
    }
    if (clean) break;
  }
  x.set_requires_grad(true);
  Tensor weight = random_tensor({2, 3, 3, 3}, rng, -1.0, 1.0);
  setup.check = {x};
  setup.loss = [x, weight](Tape& tape) {
    return sum(tape, mul(tape, maxpool2d(tape, x, 2, 2), weight));
  };
  return setup;
}

Setup make_batchnorm_setup(Rng& rng) {
  Setup setup;
  setup.tolerance = 1e-4;
  auto layer = std::make_shared<BatchNorm>(5);
  Tensor gamma = layer->gamma();
  Tensor beta = layer->beta();
  for (double& g : gamma.mutable_data()) g = rng.uniform(0.5, 1.5);
  for (double& b : beta.mutable_data()) b = rng.uniform(-0.5, 0.5);
  Tensor x = random_tensor({24, 5}, rng, -2.0, 2.0).set_requires_grad(true);
  Tensor weight = random_tensor({24, 5}, rng, -1.0, 1.0);
  setup.check = {x, gamma, beta};
  setup.loss = [layer, x, weight](Tape& tape) {
    Tensor in[] = {x};
    return sum(tape, mul(tape, layer->forward(tape, in, Mode::training), weight));
  };
  return setup;
}

Setup make_softmax_xent_setup(Rng& rng) {
  Setup setup;
  Tensor logits =
      random_tensor({12, 10}, rng, -2.0, 2.0).set_requires_grad(true);
  std::vector<int> labels(12);
  for (int& l : labels) l = static_cast<int>(rng.below(10));
  setup.check = {logits};
  setup.loss = [logits, labels](Tape& tape) {
    return softmax_xent(tape, logits, labels);
  };
  return setup;
}

struct Component {
  std::string name;
  std::function<Setup(Rng&)> make;
};

std::vector<Component> component_table() {
  std::vector<Component> table;
  for (ActivationKind kind : all_activation_kinds()) {
    table.push_back({std::string(activation_name(kind)),
                     [kind](Rng& rng) { return make_activation_setup(kind, rng); }});
  }
  table.push_back({"matmul", make_matmul_setup});
  table.push_back({"dense", make_dense_setup});
  table.push_back({"conv2d", make_conv2d_setup});
  table.push_back({"maxpool2d", make_maxpool_setup});
  table.push_back({"batchnorm", make_batchnorm_setup});
  table.push_back({"softmax_xent", make_softmax_xent_setup});
  return table;
}

GradCheckResult run_one(const Component& component, uint64_t seed,
                        int min_points) {
  Rng rng(seed);
  Setup setup = component.make(rng);

  for (Tensor& t : setup.check) t.zero_grad();
  {
    Tape tape;
    Tensor loss = setup.loss(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(setup.check.size());
  for (Tensor& t : setup.check) analytic.push_back(t.grad_tensor());

  auto value = [&setup] {
    Tape tape;
    return setup.loss(tape).item();
  };

  int64_t total = 0;
  for (Tensor& t : setup.check) total += t.size();
  const int64_t budget =
      std::min<int64_t>(total, std::max<int64_t>(min_points, kMaxProbes));
  const int64_t stride = std::max<int64_t>(1, total / budget);

  GradCheckResult result;
  result.component = component.name;
  result.tolerance = setup.tolerance;
  int64_t cursor = 0;
  for (size_t t = 0; t < setup.check.size(); ++t) {
    Tensor& tensor = setup.check[t];
    std::span<double> data = tensor.mutable_data();
    std::span<const double> grad = analytic[t].data();
    for (int64_t i = 0; i < tensor.size(); ++i, ++cursor) {
      if (cursor % stride != 0) continue;
      const double saved = data[i];
      data[i] = saved + kStep;
      const double up = value();
      data[i] = saved - kStep;
      const double down = value();
      data[i] = saved;
      const double fd = (up - down) / (2 * kStep);
      const double rel = std::abs(grad[i] - fd) /
                         std::max({1e-6, std::abs(grad[i]), std::abs(fd)});
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.points;
    }
  }
  result.passed = result.max_rel_err <= result.tolerance;
  return result;
}

}  // namespace

std::vector<std::string> gradcheck_component_names() {
  std::vector<std::string> names;
  for (const Component& c : component_table()) names.push_back(c.name);
  return names;
}

std::vector<GradCheckResult> run_gradcheck(
    std::span<const std::string> components, uint64_t seed, int min_points) {
  if (numeric_mode() != NumericMode::f64) {
    throw ContractError("gradcheck requires f64 numerics");
  }
  const std::vector<Component> table = component_table();
  std::vector<GradCheckResult> results;
  for (const std::string& name : components) {
    bool found = false;
    for (size_t i = 0; i < table.size(); ++i) {
      if (table[i].name != name) continue;
      results.push_back(run_one(table[i], seed + i, min_points));
      found = true;
      break;
    }
    if (!found) {
      throw ContractError("gradcheck: unknown component \"" + name + "\"");
    }
  }
  return results;
}

std::vector<GradCheckResult> run_gradcheck_all(uint64_t seed, int min_points) {
  std::vector<std::string> names = gradcheck_component_names();
  return run_gradcheck(names, seed, min_points);
}

}  // namespace talu
