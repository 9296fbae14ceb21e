#pragma once

#include <cstdint>

#include "talu/tape.hpp"
#include "talu/tensor.hpp"

namespace talu {

enum class Padding { same, valid };

// [M,K] x [K,N] -> [M,N].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// NHWC cross-correlation. input [N,H,W,Cin], kernel [kh,kw,Cin,Cout],
// bias [Cout]. "same" zero-pads so out spatial = ceil(in / stride) with any
// odd padding going to the bottom/right edge; "valid" requires the kernel to
// fit. Gradients flow to input, kernel and bias.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, Padding padding = Padding::same,
              int64_t stride = 1);

// Output shape of conv2d without running it.
Shape conv2d_out_shape(const Shape& input, const Shape& kernel,
                       Padding padding, int64_t stride);

// Window max over [N,H,W,C]. Ties take the first element in row-major window
// order. By default spatial dims must tile exactly; with floor_odd a
// trailing row/column that does not fill a window is dropped.
Tensor maxpool2d(Tape& tape, const Tensor& input, int64_t window = 2,
                 int64_t stride = 2, bool floor_odd = false);

// Elementwise; shapes must match exactly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

// [N, d1, d2, ...] -> [N, d1*d2*...].
Tensor flatten(Tape& tape, const Tensor& x);

// Sum of all elements -> rank-0.
Tensor sum(Tape& tape, const Tensor& x);

// x [..., C] + bias [C]. The only broadcast in the library.
Tensor bias_add_channels(Tape& tape, const Tensor& x, const Tensor& bias);

}  // namespace talu
