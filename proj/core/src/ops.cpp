#include "talu/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <utility>
#include <vector>

#include "talu/error.hpp"
#include "talu/internal/kernels.hpp"
#include "talu/numeric.hpp"

namespace talu {

namespace internal {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
static MatRM<T> load(const double* p, int64_t rows, int64_t cols) {
  MatRM<T> m(rows, cols);
  const int64_t n = rows * cols;
  T* dst = m.data();
  for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<T>(p[i]);
  return m;
}

template <typename T>
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k,
          int64_t n, bool ta, bool tb, bool acc) {
  MatRM<T> am = ta ? load<T>(a, k, m) : load<T>(a, m, k);
  MatRM<T> bm = tb ? load<T>(b, n, k) : load<T>(b, k, n);
  MatRM<T> cm(m, n);
  if (ta && tb) {
    cm.noalias() = am.transpose() * bm.transpose();
  } else if (ta) {
    cm.noalias() = am.transpose() * bm;
  } else if (tb) {
    cm.noalias() = am * bm.transpose();
  } else {
    cm.noalias() = am * bm;
  }
  const T* src = cm.data();
  const int64_t total = m * n;
  if (acc) {
    for (int64_t i = 0; i < total; ++i) c[i] += static_cast<double>(src[i]);
  } else {
    for (int64_t i = 0; i < total; ++i) c[i] = static_cast<double>(src[i]);
  }
}

template void gemm<float>(const double*, const double*, double*, int64_t,
                          int64_t, int64_t, bool, bool, bool);
template void gemm<double>(const double*, const double*, double*, int64_t,
                           int64_t, int64_t, bool, bool, bool);

void gemm_active(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n, bool ta, bool tb, bool acc) {
  if (numeric_mode() == NumericMode::f32) {
    gemm<float>(a, b, c, m, k, n, ta, tb, acc);
  } else {
    gemm<double>(a, b, c, m, k, n, ta, tb, acc);
  }
}

}  // namespace internal

using internal::gemm_active;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree: " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = Tensor::uninitialized({m, n});
  gemm_active(a.data().data(), b.data().data(), out.mutable_data().data(), m,
              k, n, false, false, false);
  Tensor ta = a, tb = b;
  return tape.record(out, {a, b},
                     [ta, tb, m, k, n](std::span<const double> up) mutable {
    if (ta.wants_grad()) {
      gemm_active(up.data(), tb.data().data(), ta.grad_buffer().data(), m, n,
                  k, false, true, true);
    }
    if (tb.wants_grad()) {
      gemm_active(ta.data().data(), up.data(), tb.grad_buffer().data(), k, m,
                  n, true, false, true);
    }
  });
}

namespace {

struct ConvGeometry {
  int64_t batch, in_h, in_w, in_c;
  int64_t kh, kw, out_c;
  int64_t out_h, out_w;
  int64_t pad_top, pad_left;
  int64_t stride;
  int64_t patch() const { return kh * kw * in_c; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel,
                           Padding padding, int64_t stride) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw ShapeError("conv2d: expects input [N,H,W,C] and kernel "
                     "[kh,kw,Cin,Cout], got " +
                     shape_str(input) + " and " + shape_str(kernel));
  }
  if (stride < 1) {
    throw ShapeError("conv2d: stride must be >= 1, got " +
                     std::to_string(stride));
  }
  if (kernel[2] != input[3]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel[2]) +
                     " input channels but input " + shape_str(input) +
                     " has " + std::to_string(input[3]));
  }
  ConvGeometry g;
  g.batch = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  g.kh = kernel[0];
  g.kw = kernel[1];
  g.out_c = kernel[3];
  g.stride = stride;
  if (padding == Padding::same) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const int64_t pad_h =
        std::max<int64_t>((g.out_h - 1) * stride + g.kh - g.in_h, 0);
    const int64_t pad_w =
        std::max<int64_t>((g.out_w - 1) * stride + g.kw - g.in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (g.in_h < g.kh || g.in_w < g.kw) {
      throw ShapeError("conv2d: valid padding needs the kernel to fit: input " +
                       shape_str(input) + ", kernel " + shape_str(kernel));
    }
    g.out_h = (g.in_h - g.kh) / stride + 1;
    g.out_w = (g.in_w - g.kw) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// One image [H,W,C] -> patch matrix [out_h*out_w, kh*kw*Cin]; out-of-bounds
// reads are the zero padding. The (dx, c) block of a patch row is one
// contiguous span of the image, so each dy contributes a single copy run
// framed by zero fill where the kernel hangs over the edge.
template <typename T>
void im2col(const double* img, const ConvGeometry& g,
            internal::MatRM<T>& col) {
  const int64_t kwc = g.kw * g.in_c;
  int64_t row = 0;
  for (int64_t oy = 0; oy < g.out_h; ++oy) {
    for (int64_t ox = 0; ox < g.out_w; ++ox) {
      T* dst = col.data() + row * g.patch();
      const int64_t ix0 = ox * g.stride - g.pad_left;
      const int64_t lo = std::max<int64_t>(0, -ix0);
      const int64_t hi = std::min<int64_t>(g.kw, g.in_w - ix0);
      for (int64_t dy = 0; dy < g.kh; ++dy, dst += kwc) {
        const int64_t iy = oy * g.stride + dy - g.pad_top;
        if (iy < 0 || iy >= g.in_h || lo >= hi) {
          std::fill(dst, dst + kwc, T(0));
          continue;
        }
        if (lo > 0) std::fill(dst, dst + lo * g.in_c, T(0));
        const double* src = img + (iy * g.in_w + ix0 + lo) * g.in_c;
        T* out = dst + lo * g.in_c;
        const int64_t run = (hi - lo) * g.in_c;
        for (int64_t i = 0; i < run; ++i) out[i] = static_cast<T>(src[i]);
        if (hi < g.kw) std::fill(dst + hi * g.in_c, dst + kwc, T(0));
      }
      ++row;
    }
  }
}

// Scatter-add of a patch-matrix gradient back onto one image, walking the
// same runs as im2col.
template <typename T>
void col2im_acc(const internal::MatRM<T>& dcol, const ConvGeometry& g,
                double* dimg) {
  const int64_t kwc = g.kw * g.in_c;
  int64_t row = 0;
  for (int64_t oy = 0; oy < g.out_h; ++oy) {
    for (int64_t ox = 0; ox < g.out_w; ++ox) {
      const T* src = dcol.data() + row * g.patch();
      const int64_t ix0 = ox * g.stride - g.pad_left;
      const int64_t lo = std::max<int64_t>(0, -ix0);
      const int64_t hi = std::min<int64_t>(g.kw, g.in_w - ix0);
      for (int64_t dy = 0; dy < g.kh; ++dy, src += kwc) {
        const int64_t iy = oy * g.stride + dy - g.pad_top;
        if (iy < 0 || iy >= g.in_h || lo >= hi) continue;
        double* dst = dimg + (iy * g.in_w + ix0 + lo) * g.in_c;
        const T* s = src + lo * g.in_c;
        const int64_t run = (hi - lo) * g.in_c;
        for (int64_t i = 0; i < run; ++i) dst[i] += static_cast<double>(s[i]);
      }
      ++row;
    }
  }
}

// With very few input channels the patch dimension is too short for the gemm
// to pay off; accumulate taps directly, vectorizing over output channels.
template <typename T>
void conv_forward_narrow(const double* x, const std::vector<T>& w,
                         const std::vector<T>& bias, double* y,
                         const ConvGeometry& g) {
  const int64_t oc = g.out_c;
  const int64_t img_size = g.in_h * g.in_w * g.in_c;
  const int64_t out_size = g.out_h * g.out_w * oc;
  std::vector<T> acc(static_cast<size_t>(oc));
  for (int64_t n = 0; n < g.batch; ++n) {
    const double* img = x + n * img_size;
    double* dst = y + n * out_size;
    for (int64_t oy = 0; oy < g.out_h; ++oy) {
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        std::copy(bias.begin(), bias.end(), acc.begin());
        for (int64_t dy = 0; dy < g.kh; ++dy) {
          const int64_t iy = oy * g.stride + dy - g.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int64_t dx = 0; dx < g.kw; ++dx) {
            const int64_t ix = ox * g.stride + dx - g.pad_left;
            if (ix < 0 || ix >= g.in_w) continue;
            const double* px = img + (iy * g.in_w + ix) * g.in_c;
            for (int64_t ci = 0; ci < g.in_c; ++ci) {
              const T xv = static_cast<T>(px[ci]);
              const T* wrow = w.data() + ((dy * g.kw + dx) * g.in_c + ci) * oc;
              T* a = acc.data();
              for (int64_t c = 0; c < oc; ++c) a[c] += xv * wrow[c];
            }
          }
        }
        double* d = dst + (oy * g.out_w + ox) * oc;
        for (int64_t c = 0; c < oc; ++c) d[c] = static_cast<double>(acc[c]);
      }
    }
  }
}

template <typename T>
void conv_forward(const double* x, const double* k, const double* b,
                  double* y, const ConvGeometry& g) {
  const int64_t rows = g.out_h * g.out_w;
  std::vector<T> bias(static_cast<size_t>(g.out_c));
  for (int64_t c = 0; c < g.out_c; ++c) bias[c] = static_cast<T>(b[c]);
  if (g.in_c <= 4) {
    std::vector<T> w(static_cast<size_t>(g.patch() * g.out_c));
    for (size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(k[i]);
    conv_forward_narrow<T>(x, w, bias, y, g);
    return;
  }
  internal::MatRM<T> w = internal::load<T>(k, g.patch(), g.out_c);
  internal::MatRM<T> col(rows, g.patch());
  internal::MatRM<T> out(rows, g.out_c);
  const int64_t img_size = g.in_h * g.in_w * g.in_c;
  const int64_t out_size = rows * g.out_c;
  for (int64_t n = 0; n < g.batch; ++n) {
    im2col<T>(x + n * img_size, g, col);
    out.noalias() = col * w;
    const T* brow = bias.data();
    double* dst = y + n * out_size;
    const T* src = out.data();
    for (int64_t i = 0; i < rows; ++i) {
      const T* s = src + i * g.out_c;
      double* d = dst + i * g.out_c;
      for (int64_t c = 0; c < g.out_c; ++c) {
        d[c] = static_cast<double>(s[c] + brow[c]);
      }
    }
  }
}

// For stride 1 the input gradient is itself a stride-1 convolution of the
// upstream with the kernel flipped in both spatial axes and its channel axes
// swapped. That keeps the gemm inner dimension at kh*kw*out_c instead of
// out_c and replaces the col2im scatter with a contiguous accumulate.
struct ConvFlipped {
  ConvGeometry geom;
  internal::MatRM<double> kernel;  // [kh*kw*out_c, in_c], built in doubles
};

ConvFlipped conv_flipped(const double* k, const ConvGeometry& g) {
  ConvFlipped f;
  f.geom.batch = g.batch;
  f.geom.in_h = g.out_h;
  f.geom.in_w = g.out_w;
  f.geom.in_c = g.out_c;
  f.geom.kh = g.kh;
  f.geom.kw = g.kw;
  f.geom.out_c = g.in_c;
  f.geom.out_h = g.in_h;
  f.geom.out_w = g.in_w;
  f.geom.pad_top = g.kh - 1 - g.pad_top;
  f.geom.pad_left = g.kw - 1 - g.pad_left;
  f.geom.stride = 1;
  f.kernel.resize(f.geom.patch(), g.in_c);
  for (int64_t ey = 0; ey < g.kh; ++ey) {
    for (int64_t ex = 0; ex < g.kw; ++ex) {
      const int64_t dy = g.kh - 1 - ey;
      const int64_t dx = g.kw - 1 - ex;
      for (int64_t o = 0; o < g.out_c; ++o) {
        for (int64_t ci = 0; ci < g.in_c; ++ci) {
          f.kernel((ey * g.kw + ex) * g.out_c + o, ci) =
              k[((dy * g.kw + dx) * g.in_c + ci) * g.out_c + o];
        }
      }
    }
  }
  return f;
}

template <typename T>
void conv_backward(const double* x, const double* k, const double* up,
                   double* dx, double* dk, double* db,
                   const ConvGeometry& g) {
  const int64_t rows = g.out_h * g.out_w;
  const int64_t img_size = g.in_h * g.in_w * g.in_c;
  const int64_t out_size = rows * g.out_c;
  if (db) {
    for (int64_t n = 0; n < g.batch; ++n) {
      const double* u = up + n * out_size;
      for (int64_t i = 0; i < rows; ++i) {
        for (int64_t c = 0; c < g.out_c; ++c) db[c] += u[i * g.out_c + c];
      }
    }
  }
  if (!dx && !dk) return;
  const bool flip = dx && g.stride == 1;
  internal::MatRM<T> w;
  if (dx && !flip) w = internal::load<T>(k, g.patch(), g.out_c);
  internal::MatRM<T> wf;
  ConvGeometry gf;
  if (flip) {
    ConvFlipped f = conv_flipped(k, g);
    gf = f.geom;
    wf = f.kernel.cast<T>();
  }
  internal::MatRM<T> col(rows, g.patch());
  internal::MatRM<T> colu;
  internal::MatRM<T> dimg;
  if (flip) {
    colu.resize(g.in_h * g.in_w, gf.patch());
    dimg.resize(g.in_h * g.in_w, g.in_c);
  }
  internal::MatRM<T> dcol;
  if (dx && !flip) dcol.resize(rows, g.patch());
  const bool need_u = dk || (dx && !flip);
  internal::MatRM<T> u;
  if (need_u) u.resize(rows, g.out_c);
  internal::MatRM<T> dwt;
  if (dk) dwt = internal::MatRM<T>::Zero(g.out_c, g.patch());
  for (int64_t n = 0; n < g.batch; ++n) {
    if (need_u) {
      const double* src = up + n * out_size;
      T* dst = u.data();
      for (int64_t i = 0; i < out_size; ++i) dst[i] = static_cast<T>(src[i]);
    }
    if (dk) {
      im2col<T>(x + n * img_size, g, col);
      dwt.noalias() += u.transpose() * col;
    }
    if (flip) {
      im2col<T>(up + n * out_size, gf, colu);
      dimg.noalias() = colu * wf;
      double* d = dx + n * img_size;
      const T* src = dimg.data();
      for (int64_t i = 0; i < img_size; ++i) {
        d[i] += static_cast<double>(src[i]);
      }
    } else if (dx) {
      dcol.noalias() = u * w.transpose();
      col2im_acc<T>(dcol, g, dx + n * img_size);
    }
  }
  if (dk) {
    for (int64_t p = 0; p < g.patch(); ++p) {
      for (int64_t c = 0; c < g.out_c; ++c) {
        dk[p * g.out_c + c] += static_cast<double>(dwt(c, p));
      }
    }
  }
}

}  // namespace

Shape conv2d_out_shape(const Shape& input, const Shape& kernel,
                       Padding padding, int64_t stride) {
  ConvGeometry g = conv_geometry(input, kernel, padding, stride);
  return {g.batch, g.out_h, g.out_w, g.out_c};
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, Padding padding, int64_t stride) {
  ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), padding, stride);
  if (bias.rank() != 1 || bias.shape()[0] != g.out_c) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(g.out_c) +
                     "], got " + shape_str(bias.shape()));
  }
  Tensor out = Tensor::uninitialized({g.batch, g.out_h, g.out_w, g.out_c});
  if (numeric_mode() == NumericMode::f32) {
    conv_forward<float>(input.data().data(), kernel.data().data(),
                        bias.data().data(), out.mutable_data().data(), g);
  } else {
    conv_forward<double>(input.data().data(), kernel.data().data(),
                         bias.data().data(), out.mutable_data().data(), g);
  }
  Tensor x = input, k = kernel, b = bias;
  return tape.record(out, {input, kernel, bias},
                     [x, k, b, g](std::span<const double> up) mutable {
    double* dx = x.wants_grad() ? x.grad_buffer().data() : nullptr;
    double* dk = k.wants_grad() ? k.grad_buffer().data() : nullptr;
    double* db = b.wants_grad() ? b.grad_buffer().data() : nullptr;
    if (numeric_mode() == NumericMode::f32) {
      conv_backward<float>(x.data().data(), k.data().data(), up.data(), dx, dk,
                           db, g);
    } else {
      conv_backward<double>(x.data().data(), k.data().data(), up.data(), dx,
                            dk, db, g);
    }
  });
}

Tensor maxpool2d(Tape& tape, const Tensor& input, int64_t window,
                 int64_t stride, bool floor_odd) {
  if (input.rank() != 4) {
    throw ShapeError("maxpool2d: expects [N,H,W,C], got " +
                     shape_str(input.shape()));
  }
  if (window < 1 || stride < 1) {
    throw ShapeError("maxpool2d: window and stride must be >= 1");
  }
  const int64_t n = input.shape()[0], h = input.shape()[1],
                w = input.shape()[2], c = input.shape()[3];
  if (h < window || w < window) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " does not fit input " + shape_str(input.shape()));
  }
  if (!floor_odd && ((h - window) % stride != 0 || (w - window) % stride != 0)) {
    throw ShapeError("maxpool2d: spatial dims of " + shape_str(input.shape()) +
                     " do not tile with window " + std::to_string(window) +
                     ", stride " + std::to_string(stride));
  }
  const int64_t out_h = (h - window) / stride + 1;
  const int64_t out_w = (w - window) / stride + 1;
  Tensor out = Tensor::uninitialized({n, out_h, out_w, c});

  // Flat input index of the window max (first hit wins) per output element,
  // saved for the backward scatter.
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  {
    std::span<const double> x = input.data();
    std::span<double> y = out.mutable_data();
    int64_t* am = argmax->data();
    int64_t o = 0;
    if (window == 2 && stride == 2) {
      for (int64_t img = 0; img < n; ++img) {
        for (int64_t oy = 0; oy < out_h; ++oy) {
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t i00 = ((img * h + oy * 2) * w + ox * 2) * c;
            const int64_t i10 = i00 + w * c;
            const double* r0 = &x[i00];
            const double* r1 = &x[i10];
            for (int64_t ch = 0; ch < c; ++ch) {
              double m = r0[ch];
              int64_t bi = i00 + ch;
              if (r0[c + ch] > m) {
                m = r0[c + ch];
                bi = i00 + c + ch;
              }
              if (r1[ch] > m) {
                m = r1[ch];
                bi = i10 + ch;
              }
              if (r1[c + ch] > m) {
                m = r1[c + ch];
                bi = i10 + c + ch;
              }
              y[o + ch] = m;
              am[o + ch] = bi;
            }
            o += c;
          }
        }
      }
    } else {
      for (int64_t img = 0; img < n; ++img) {
        for (int64_t oy = 0; oy < out_h; ++oy) {
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t iy0 = oy * stride;
            const int64_t ix0 = ox * stride;
            for (int64_t ch = 0; ch < c; ++ch) {
              int64_t best = -1;
              double best_v = 0;
              for (int64_t dy = 0; dy < window; ++dy) {
                for (int64_t dx = 0; dx < window; ++dx) {
                  const int64_t idx =
                      ((img * h + iy0 + dy) * w + ix0 + dx) * c + ch;
                  if (best < 0 || x[idx] > best_v) {
                    best = idx;
                    best_v = x[idx];
                  }
                }
              }
              am[o] = best;
              y[o] = best_v;
              ++o;
            }
          }
        }
      }
    }
  }

  Tensor in = input;
  return tape.record(out, {input},
                     [in, argmax](std::span<const double> up) mutable {
    if (!in.wants_grad()) return;
    double* dx = in.grad_buffer().data();
    const int64_t* am = argmax->data();
    for (size_t o = 0; o < up.size(); ++o) dx[am[o]] += up[o];
  });
}

namespace {

template <typename T>
void ewise_add(const double* a, const double* b, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    y[i] = static_cast<double>(static_cast<T>(a[i]) + static_cast<T>(b[i]));
  }
}

template <typename T>
void ewise_mul(const double* a, const double* b, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    y[i] = static_cast<double>(static_cast<T>(a[i]) * static_cast<T>(b[i]));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": shapes disagree: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const int64_t n = a.size();
  Tensor out = Tensor::uninitialized(a.shape());
  if (numeric_mode() == NumericMode::f32) {
    ewise_add<float>(a.data().data(), b.data().data(),
                     out.mutable_data().data(), n);
  } else {
    ewise_add<double>(a.data().data(), b.data().data(),
                      out.mutable_data().data(), n);
  }
  Tensor ta = a, tb = b;
  return tape.record(out, {a, b}, [ta, tb, n](std::span<const double> up) mutable {
    if (ta.wants_grad()) {
      double* da = ta.grad_buffer().data();
      for (int64_t i = 0; i < n; ++i) da[i] += up[i];
    }
    if (tb.wants_grad()) {
      double* db = tb.grad_buffer().data();
      for (int64_t i = 0; i < n; ++i) db[i] += up[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const int64_t n = a.size();
  Tensor out = Tensor::uninitialized(a.shape());
  if (numeric_mode() == NumericMode::f32) {
    ewise_mul<float>(a.data().data(), b.data().data(),
                     out.mutable_data().data(), n);
  } else {
    ewise_mul<double>(a.data().data(), b.data().data(),
                      out.mutable_data().data(), n);
  }
  Tensor ta = a, tb = b;
  return tape.record(out, {a, b}, [ta, tb, n](std::span<const double> up) mutable {
    if (ta.wants_grad()) {
      double* da = ta.grad_buffer().data();
      std::span<const double> bv = tb.data();
      for (int64_t i = 0; i < n; ++i) da[i] += up[i] * bv[i];
    }
    if (tb.wants_grad()) {
      double* db = tb.grad_buffer().data();
      std::span<const double> av = ta.data();
      for (int64_t i = 0; i < n; ++i) db[i] += up[i] * av[i];
    }
  });
}

Tensor flatten(Tape& tape, const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("flatten: expects rank >= 2, got " +
                     shape_str(x.shape()));
  }
  const int64_t n = x.shape()[0];
  const int64_t width = x.size() / n;
  Tensor out = Tensor::uninitialized({n, width});
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  Tensor in = x;
  return tape.record(out, {x}, [in](std::span<const double> up) mutable {
    if (!in.wants_grad()) return;
    double* dx = in.grad_buffer().data();
    for (size_t i = 0; i < up.size(); ++i) dx[i] += up[i];
  });
}

Tensor sum(Tape& tape, const Tensor& x) {
  const int64_t n = x.size();
  double total;
  if (numeric_mode() == NumericMode::f32) {
    float acc = 0.0f;
    for (double v : x.data()) acc += static_cast<float>(v);
    total = static_cast<double>(acc);
  } else {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    total = acc;
  }
  Tensor out = Tensor::scalar(total);
  Tensor in = x;
  return tape.record(out, {x}, [in, n](std::span<const double> up) mutable {
    if (!in.wants_grad()) return;
    double* dx = in.grad_buffer().data();
    for (int64_t i = 0; i < n; ++i) dx[i] += up[0];
  });
}

Tensor bias_add_channels(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 ||
      x.shape().back() != bias.shape()[0]) {
    throw ShapeError("bias_add_channels: bias " + shape_str(bias.shape()) +
                     " does not match last axis of " + shape_str(x.shape()));
  }
  const int64_t c = bias.shape()[0];
  const int64_t n = x.size();
  Tensor out = Tensor::uninitialized(x.shape());
  {
    std::span<const double> xv = x.data();
    std::span<const double> bv = bias.data();
    std::span<double> y = out.mutable_data();
    if (numeric_mode() == NumericMode::f32) {
      for (int64_t i = 0; i < n; ++i) {
        y[i] = static_cast<double>(static_cast<float>(xv[i]) +
                                   static_cast<float>(bv[i % c]));
      }
    } else {
      for (int64_t i = 0; i < n; ++i) y[i] = xv[i] + bv[i % c];
    }
  }
  Tensor in = x, b = bias;
  return tape.record(out, {x, bias},
                     [in, b, n, c](std::span<const double> up) mutable {
    if (in.wants_grad()) {
      double* dx = in.grad_buffer().data();
      for (int64_t i = 0; i < n; ++i) dx[i] += up[i];
    }
    if (b.wants_grad()) {
      double* db = b.grad_buffer().data();
      for (int64_t i = 0; i < n; ++i) db[i % c] += up[i];
    }
  });
}

}  // namespace talu
