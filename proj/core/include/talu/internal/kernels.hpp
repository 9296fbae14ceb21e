#pragma once

// Precision-templated compute kernels shared by ops, layers and training.
// T is float or double; inputs and outputs live in double storage and are
// rounded through T on the way in and out, so the f32 mode really computes
// in single precision.

#include <cstdint>
#include <span>

namespace talu::internal {

// c = a x b with optional transposes, c accumulated when acc is true.
// a is [m,k] (or [k,m] when ta), b is [k,n] (or [n,k] when tb), c is [m,n].
template <typename T>
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k,
          int64_t n, bool ta, bool tb, bool acc);

void gemm_active(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n, bool ta, bool tb, bool acc);

}  // namespace talu::internal
