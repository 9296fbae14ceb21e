#include "talu/numeric.hpp"

namespace talu {

namespace {
NumericMode g_mode = NumericMode::f64;
int g_max_threads = 1;
}  // namespace

NumericMode numeric_mode() { return g_mode; }

void set_numeric_mode(NumericMode mode) { g_mode = mode; }

std::string_view numeric_mode_name(NumericMode mode) {
  return mode == NumericMode::f64 ? "f64" : "f32";
}

std::optional<NumericMode> numeric_mode_from_name(std::string_view name) {
  if (name == "f64") return NumericMode::f64;
  if (name == "f32") return NumericMode::f32;
  return std::nullopt;
}

int max_threads() { return g_max_threads; }

void set_max_threads(int n) { g_max_threads = n < 1 ? 1 : n; }

}  // namespace talu
