#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "talu/tape.hpp"
#include "talu/tensor.hpp"

namespace talu {

enum class ActivationKind {
  talu,
  relu,
  leakyrelu,
  prelu,
  elu,
  selu,
  gelu,
  swish,
  softplus,
  softsign,
};

// Everything an activation needs to evaluate. talu's alpha and prelu's slope
// are the trainable ones; when used inside a model the live value sits in a
// rank-0 parameter tensor and the fields here are the init values.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::talu;
  double alpha = 1.0;       // talu: tanh gain on the negative side
  double slope = 0.3;       // leakyrelu fixed slope, prelu init
  double beta = 1.0;        // swish: sigmoid(beta * x), fixed
  double selu_alpha = 1.6732632423543772;
  double selu_scale = 1.0507009873554805;

  // One trainable scalar for talu and prelu, none otherwise.
  int trainable_params() const;
  // Current value of that scalar from the spec fields.
  double param_init() const;
};

// All kinds, in stable presentation order (talu first, then the baselines).
std::vector<ActivationKind> all_activation_kinds();

// Lowercase identifier used by CLI flags and file names.
std::string_view activation_name(ActivationKind kind);
// Mixed-case name for tables and summaries.
std::string_view activation_display_name(ActivationKind kind);
std::optional<ActivationKind> activation_from_name(std::string_view name);

// Scalar value and slope, computed in the active precision. These back the
// array ops and are exposed for tests.
double act_value(const ActivationSpec& spec, double x);
double act_slope(const ActivationSpec& spec, double x);

// Identity on the positive side, alpha * tanh on the non-positive side.
// With alpha = 0 the output is bitwise identical to relu (negative zeros are
// canonicalized away).
Tensor talu_forward(const Tensor& x, double alpha);

struct ActivationGrad {
  Tensor d_input;
  double d_param = 0.0;  // d loss / d alpha (talu) or d slope (prelu)
  bool has_d_param = false;
};

ActivationGrad talu_backward(const Tensor& x, double alpha,
                             const Tensor& upstream);

// Array forward/backward for any kind, without a tape.
Tensor act_forward(const ActivationSpec& spec, const Tensor& x);
ActivationGrad act_backward(const ActivationSpec& spec, const Tensor& x,
                            const Tensor& upstream);

// Tape op. For talu and prelu pass the trainable rank-0 parameter; its
// current value overrides the spec field and its gradient accumulates the
// parameter term. Other kinds ignore param.
Tensor activation(Tape& tape, const Tensor& x, const ActivationSpec& spec,
                  const Tensor& param = {});

}  // namespace talu
