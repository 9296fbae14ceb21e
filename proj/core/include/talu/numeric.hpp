#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace talu {

// Global arithmetic precision. Storage is always double; under f32 every
// kernel (gemm, conv, activations, batchnorm, optimizer) computes in float
// and results are rounded through float before being stored. f64 is the
// default and is required for gradient checking.
enum class NumericMode { f64, f32 };

NumericMode numeric_mode();
void set_numeric_mode(NumericMode mode);

std::string_view numeric_mode_name(NumericMode mode);
std::optional<NumericMode> numeric_mode_from_name(std::string_view name);

// Restores the previous mode on scope exit.
class NumericModeGuard {
 public:
  explicit NumericModeGuard(NumericMode mode) : saved_(numeric_mode()) {
    set_numeric_mode(mode);
  }
  ~NumericModeGuard() { set_numeric_mode(saved_); }
  NumericModeGuard(const NumericModeGuard&) = delete;
  NumericModeGuard& operator=(const NumericModeGuard&) = delete;

 private:
  NumericMode saved_;
};

// Thread cap for compute kernels. The engine executes every kernel
// sequentially with fixed accumulation order, so results never depend on
// this value; it exists so callers can express intent and so the CLI can
// surface it.
int max_threads();
void set_max_threads(int n);

}  // namespace talu
