#pragma once

#include <span>
#include <string>
#include <vector>

#include "talu/tensor.hpp"

namespace talu {

struct GradCheckResult {
  std::string component;
  int points = 0;         // coordinates probed with finite differences
  double max_rel_err = 0;
  double tolerance = 0;
  bool passed = false;
};

// Component names: every activation, then matmul, dense, conv2d, maxpool2d,
// batchnorm, softmax_xent.
std::vector<std::string> gradcheck_component_names();

// Central finite differences with h = 1e-5 against tape gradients, at least
// min_points coordinates per component. Relative error uses
// |g - fd| / max(1e-6, |g|, |fd|); tolerance is 1e-5 (1e-4 for batchnorm).
// Activation probes stay 1e-3 away from branch kinks. Requires f64 mode;
// throws ContractError under f32.
std::vector<GradCheckResult> run_gradcheck(
    std::span<const std::string> components, uint64_t seed = 0,
    int min_points = 100);

// All components.
std::vector<GradCheckResult> run_gradcheck_all(uint64_t seed = 0,
                                               int min_points = 100);

}  // namespace talu
