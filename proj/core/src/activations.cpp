#include "talu/activations.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "talu/error.hpp"
#include "talu/numeric.hpp"

namespace talu {

int ActivationSpec::trainable_params() const {
  return kind == ActivationKind::talu || kind == ActivationKind::prelu ? 1 : 0;
}

double ActivationSpec::param_init() const {
  if (kind == ActivationKind::talu) return alpha;
  if (kind == ActivationKind::prelu) return slope;
  return 0.0;
}

std::vector<ActivationKind> all_activation_kinds() {
  return {ActivationKind::talu,  ActivationKind::relu,
          ActivationKind::leakyrelu, ActivationKind::prelu,
          ActivationKind::elu,   ActivationKind::selu,
          ActivationKind::gelu,  ActivationKind::swish,
          ActivationKind::softplus, ActivationKind::softsign};
}

std::string_view activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::talu: return "talu";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leakyrelu: return "leakyrelu";
    case ActivationKind::prelu: return "prelu";
    case ActivationKind::elu: return "elu";
    case ActivationKind::selu: return "selu";
    case ActivationKind::gelu: return "gelu";
    case ActivationKind::swish: return "swish";
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::softsign: return "softsign";
  }
  return "?";
}

std::string_view activation_display_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::talu: return "TaLU";
    case ActivationKind::relu: return "ReLU";
    case ActivationKind::leakyrelu: return "LeakyReLU";
    case ActivationKind::prelu: return "PReLU";
    case ActivationKind::elu: return "ELU";
    case ActivationKind::selu: return "SELU";
    case ActivationKind::gelu: return "GELU";
    case ActivationKind::swish: return "Swish";
    case ActivationKind::softplus: return "Softplus";
    case ActivationKind::softsign: return "Softsign";
  }
  return "?";
}

std::optional<ActivationKind> activation_from_name(std::string_view name) {
  for (ActivationKind kind : all_activation_kinds()) {
    if (name == activation_name(kind)) return kind;
  }
  return std::nullopt;
}

namespace {

// Spec coefficients narrowed once so the hot loops read registers, not the
// spec struct.
template <typename T>
struct ActParams {
  T alpha, slope, beta, selu_alpha, selu_scale;
};

template <typename T>
ActParams<T> act_params(const ActivationSpec& s) {
  return {static_cast<T>(s.alpha), static_cast<T>(s.slope),
          static_cast<T>(s.beta), static_cast<T>(s.selu_alpha),
          static_cast<T>(s.selu_scale)};
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Value at x. The "+ T(0)" on negative branches turns -0.0 into +0.0 so a
// zero coefficient reproduces relu bit for bit. K is a compile-time constant
// so each instantiation folds to a single branch.
template <ActivationKind K, typename T>
T value_k(const ActParams<T>& p, T x) {
  if constexpr (K == ActivationKind::talu) {
    return x > T(0) ? x : p.alpha * std::tanh(x) + T(0);
  } else if constexpr (K == ActivationKind::relu) {
    return x > T(0) ? x : T(0);
  } else if constexpr (K == ActivationKind::leakyrelu ||
                       K == ActivationKind::prelu) {
    return x > T(0) ? x : p.slope * x + T(0);
  } else if constexpr (K == ActivationKind::elu) {
    return x > T(0) ? x : std::exp(x) - T(1);
  } else if constexpr (K == ActivationKind::selu) {
    return x > T(0) ? p.selu_scale * x
                    : p.selu_scale * (p.selu_alpha * (std::exp(x) - T(1)));
  } else if constexpr (K == ActivationKind::gelu) {
    const T c = std::sqrt(T(2) / T(M_PI));
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
  } else if constexpr (K == ActivationKind::swish) {
    return x * sigmoid(p.beta * x);
  } else if constexpr (K == ActivationKind::softplus) {
    return x > T(30) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  } else {
    return x / (T(1) + std::abs(x));
  }
}

// d value / d x at x. Kinks follow the same x > 0 branch split as value_k.
template <ActivationKind K, typename T>
T slope_k(const ActParams<T>& p, T x) {
  if constexpr (K == ActivationKind::talu) {
    if (x > T(0)) return T(1);
    const T t = std::tanh(x);
    return p.alpha * (T(1) - t * t) + T(0);
  } else if constexpr (K == ActivationKind::relu) {
    return x > T(0) ? T(1) : T(0);
  } else if constexpr (K == ActivationKind::leakyrelu ||
                       K == ActivationKind::prelu) {
    return x > T(0) ? T(1) : p.slope;
  } else if constexpr (K == ActivationKind::elu) {
    return x > T(0) ? T(1) : std::exp(x);
  } else if constexpr (K == ActivationKind::selu) {
    return x > T(0) ? p.selu_scale : p.selu_scale * p.selu_alpha * std::exp(x);
  } else if constexpr (K == ActivationKind::gelu) {
    const T c = std::sqrt(T(2) / T(M_PI));
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T sech2 = T(1) - t * t;
    return T(0.5) * (T(1) + t) +
           T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x);
  } else if constexpr (K == ActivationKind::swish) {
    const T sg = sigmoid(p.beta * x);
    return sg + x * p.beta * sg * (T(1) - sg);
  } else if constexpr (K == ActivationKind::softplus) {
    return sigmoid(x);
  } else {
    const T d = T(1) + std::abs(x);
    return T(1) / (d * d);
  }
}

// d value / d trainable param at x; zero for kinds without one.
template <ActivationKind K, typename T>
T pslope_k(const ActParams<T>&, T x) {
  if constexpr (K == ActivationKind::talu) {
    return x > T(0) ? T(0) : std::tanh(x);
  } else if constexpr (K == ActivationKind::prelu) {
    return x > T(0) ? T(0) : x;
  } else {
    return T(0);
  }
}

template <typename F>
decltype(auto) kind_dispatch(ActivationKind kind, F&& f) {
  using K = ActivationKind;
  switch (kind) {
    case K::talu: return f(std::integral_constant<K, K::talu>{});
    case K::relu: return f(std::integral_constant<K, K::relu>{});
    case K::leakyrelu: return f(std::integral_constant<K, K::leakyrelu>{});
    case K::prelu: return f(std::integral_constant<K, K::prelu>{});
    case K::elu: return f(std::integral_constant<K, K::elu>{});
    case K::selu: return f(std::integral_constant<K, K::selu>{});
    case K::gelu: return f(std::integral_constant<K, K::gelu>{});
    case K::swish: return f(std::integral_constant<K, K::swish>{});
    case K::softplus: return f(std::integral_constant<K, K::softplus>{});
    case K::softsign: return f(std::integral_constant<K, K::softsign>{});
  }
  return f(std::integral_constant<K, K::relu>{});
}

template <typename T>
T value_of(const ActivationSpec& s, T x) {
  const ActParams<T> p = act_params<T>(s);
  return kind_dispatch(s.kind, [&](auto k) { return value_k<k.value>(p, x); });
}

template <typename T>
T slope_of(const ActivationSpec& s, T x) {
  const ActParams<T> p = act_params<T>(s);
  return kind_dispatch(s.kind, [&](auto k) { return slope_k<k.value>(p, x); });
}

// ---- f64 bulk path: the scalar kernels, one branch per buffer. ----

template <ActivationKind K>
void forward_f64(const ActParams<double> p, const double* x, double* y,
                 int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = value_k<K>(p, x[i]);
}

template <ActivationKind K, bool Acc>
void backward_f64(const ActParams<double> p, const double* x,
                  const double* up, double* dx, double* d_param, int64_t n) {
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (dx) {
      const double g = slope_k<K>(p, x[i]) * up[i];
      if constexpr (Acc) {
        dx[i] += g;
      } else {
        dx[i] = g + 0.0;
      }
    }
    if (d_param) acc += pslope_k<K>(p, x[i]) * up[i];
  }
  if (d_param) *d_param += acc;
}

// ---- f32 bulk path. ----
//
// Chunks stream through stack buffers; Eigen supplies vectorized tanh, exp
// and log1p on the whole chunk, and plain ternary loops (which the compiler
// vectorizes) pick branches with the exact ±0 semantics of the scalar
// kernels. Transcendentals on lanes the ternary discards are harmless: they
// may overflow to inf but are never combined arithmetically. Eigen clamps
// NaN in tanh/exp, so branches taken from those arrays re-check x == x to
// keep NaN flowing through (divergence detection depends on it).

constexpr int64_t kChunk = 4096;
using ArrF = Eigen::ArrayXf;
using MapArrF = Eigen::Map<ArrF>;
using MapConstArrD = Eigen::Map<const Eigen::ArrayXd>;
using MapArrD = Eigen::Map<Eigen::ArrayXd>;

template <ActivationKind K>
void forward_f32_chunk(const ActParams<float> p, const float* xb, float* tb,
                       float* yb, int64_t m) {
  using K_ = ActivationKind;
  MapArrF xf(const_cast<float*>(xb), m);
  MapArrF yf(yb, m);
  if constexpr (K == K_::talu) {
    MapArrF t(tb, m);
    t = xf.tanh();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      const float th = x == x ? tb[i] : x;
      tb[i] = th;
      yb[i] = x > 0.0f ? x : p.alpha * th + 0.0f;
    }
  } else if constexpr (K == K_::relu) {
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? x : 0.0f;
    }
  } else if constexpr (K == K_::leakyrelu || K == K_::prelu) {
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? x : p.slope * x + 0.0f;
    }
  } else if constexpr (K == K_::elu) {
    MapArrF t(tb, m);
    t = xf.exp();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? x : (x == x ? tb[i] - 1.0f : x);
    }
  } else if constexpr (K == K_::selu) {
    MapArrF t(tb, m);
    t = xf.exp();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f
                  ? p.selu_scale * x
                  : (x == x ? p.selu_scale * (p.selu_alpha * (tb[i] - 1.0f))
                            : x);
    }
  } else if constexpr (K == K_::gelu) {
    const float c = std::sqrt(2.0f / static_cast<float>(M_PI));
    yf = 0.5f * xf * (1.0f + (c * (xf + 0.044715f * xf.cube())).tanh());
  } else if constexpr (K == K_::swish) {
    yf = xf * (1.0f + (-(p.beta * xf)).exp()).inverse();
  } else if constexpr (K == K_::softplus) {
    MapArrF t(tb, m);
    t = xf.exp().log1p();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 30.0f ? x + std::log1p(std::exp(-x))
                        : (x == x ? tb[i] : x);
    }
  } else {
    yf = xf / (1.0f + xf.abs());
  }
}

// Writes the local slope into yb and, for kinds with a trainable scalar,
// accumulates d value / d param times upstream into *pacc.
template <ActivationKind K>
void slope_f32_chunk(const ActParams<float> p, const float* xb,
                     const float* ub, float* tb, float* yb, float* pacc,
                     int64_t m) {
  using K_ = ActivationKind;
  MapArrF xf(const_cast<float*>(xb), m);
  MapArrF yf(yb, m);
  if constexpr (K == K_::talu) {
    MapArrF t(tb, m);
    t = xf.tanh();
    alignas(64) float wb[kChunk];
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      const float th = tb[i];
      yb[i] = x > 0.0f
                  ? 1.0f
                  : (x == x ? p.alpha * (1.0f - th * th) + 0.0f : x);
      wb[i] = (x > 0.0f ? 0.0f : (x == x ? th : x)) * ub[i];
    }
    *pacc += MapArrF(wb, m).sum();
  } else if constexpr (K == K_::relu) {
    for (int64_t i = 0; i < m; ++i) yb[i] = xb[i] > 0.0f ? 1.0f : 0.0f;
  } else if constexpr (K == K_::leakyrelu || K == K_::prelu) {
    alignas(64) float wb[kChunk];
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? 1.0f : p.slope;
      if constexpr (K == K_::prelu) wb[i] = (x > 0.0f ? 0.0f : x) * ub[i];
    }
    if constexpr (K == K_::prelu) *pacc += MapArrF(wb, m).sum();
  } else if constexpr (K == K_::elu) {
    MapArrF t(tb, m);
    t = xf.exp();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? 1.0f : (x == x ? tb[i] : x);
    }
  } else if constexpr (K == K_::selu) {
    MapArrF t(tb, m);
    t = xf.exp();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x > 0.0f ? p.selu_scale
                       : (x == x ? p.selu_scale * p.selu_alpha * tb[i] : x);
    }
  } else if constexpr (K == K_::gelu) {
    const float c = std::sqrt(2.0f / static_cast<float>(M_PI));
    MapArrF t(tb, m);
    t = (c * (xf + 0.044715f * xf.cube())).tanh();
    yf = 0.5f * (1.0f + t) +
         0.5f * xf * (1.0f - t * t) * c * (1.0f + 3.0f * 0.044715f * xf * xf);
  } else if constexpr (K == K_::swish) {
    MapArrF t(tb, m);
    t = (1.0f + (-(p.beta * xf)).exp()).inverse();
    yf = t + xf * p.beta * t * (1.0f - t);
  } else if constexpr (K == K_::softplus) {
    MapArrF t(tb, m);
    t = (1.0f + (-xf).exp()).inverse();
    for (int64_t i = 0; i < m; ++i) {
      const float x = xb[i];
      yb[i] = x == x ? tb[i] : x;
    }
  } else {
    yf = ((1.0f + xf.abs()) * (1.0f + xf.abs())).inverse();
  }
}

template <ActivationKind K>
void forward_f32(const ActParams<float> p, const double* x, double* y,
                 int64_t n) {
  alignas(64) float xb[kChunk], tb[kChunk], yb[kChunk];
  for (int64_t at = 0; at < n; at += kChunk) {
    const int64_t m = std::min(kChunk, n - at);
    MapArrF(xb, m) = MapConstArrD(x + at, m).cast<float>();
    forward_f32_chunk<K>(p, xb, tb, yb, m);
    MapArrD(y + at, m) = MapArrF(yb, m).cast<double>();
  }
}

template <ActivationKind K, bool Acc>
void backward_f32(const ActParams<float> p, const double* x, const double* up,
                  double* dx, double* d_param, int64_t n) {
  alignas(64) float xb[kChunk], ub[kChunk], tb[kChunk], sb[kChunk];
  float pacc = 0.0f;
  for (int64_t at = 0; at < n; at += kChunk) {
    const int64_t m = std::min(kChunk, n - at);
    MapArrF(xb, m) = MapConstArrD(x + at, m).cast<float>();
    MapArrF(ub, m) = MapConstArrD(up + at, m).cast<float>();
    slope_f32_chunk<K>(p, xb, ub, tb, sb, &pacc, m);
    if (dx) {
      double* d = dx + at;
      if constexpr (Acc) {
        for (int64_t i = 0; i < m; ++i) {
          d[i] += static_cast<double>(sb[i] * ub[i]);
        }
      } else {
        for (int64_t i = 0; i < m; ++i) {
          d[i] = static_cast<double>(sb[i] * ub[i] + 0.0f);
        }
      }
    }
  }
  if (d_param) *d_param += static_cast<double>(pacc);
}

// Variant of the talu forward that also keeps tanh(x) (with NaN reinstated)
// for the whole tensor, letting the tape backward skip recomputing it. The
// sign of the stored value matches the sign of x, so the backward needs no
// second look at x.
void forward_f32_talu_cached(const ActParams<float> p, const double* x,
                             double* y, float* tc, int64_t n) {
  alignas(64) float xb[kChunk], yb[kChunk];
  for (int64_t at = 0; at < n; at += kChunk) {
    const int64_t m = std::min(kChunk, n - at);
    MapArrF(xb, m) = MapConstArrD(x + at, m).cast<float>();
    forward_f32_chunk<ActivationKind::talu>(p, xb, tc + at, yb, m);
    MapArrD(y + at, m) = MapArrF(yb, m).cast<double>();
  }
}

void backward_f32_talu_cached(const ActParams<float> p, const float* tc,
                              const double* up, double* dx, double* d_param,
                              int64_t n) {
  alignas(64) float ub[kChunk], sb[kChunk], wb[kChunk];
  float pacc = 0.0f;
  for (int64_t at = 0; at < n; at += kChunk) {
    const int64_t m = std::min(kChunk, n - at);
    MapArrF(ub, m) = MapConstArrD(up + at, m).cast<float>();
    const float* t = tc + at;
    for (int64_t i = 0; i < m; ++i) {
      const float th = t[i];
      sb[i] = th > 0.0f ? 1.0f : p.alpha * (1.0f - th * th) + 0.0f;
      wb[i] = (th > 0.0f ? 0.0f : th) * ub[i];
    }
    pacc += MapArrF(wb, m).sum();
    if (dx) {
      double* d = dx + at;
      for (int64_t i = 0; i < m; ++i) {
        d[i] += static_cast<double>(sb[i] * ub[i]);
      }
    }
  }
  if (d_param) *d_param += static_cast<double>(pacc);
}

// dx may be null (input without gradient); d_param may be null. Acc=false
// overwrites dx, Acc=true accumulates into it; d_param always accumulates.
template <bool Acc>
void backward_bulk(const ActivationSpec& s, std::span<const double> x,
                   std::span<const double> up, double* dx, double* d_param) {
  if (s.trainable_params() == 0) d_param = nullptr;
  kind_dispatch(s.kind, [&](auto k) {
    if (numeric_mode() == NumericMode::f32) {
      backward_f32<k.value, Acc>(act_params<float>(s), x.data(), up.data(), dx,
                                 d_param, static_cast<int64_t>(x.size()));
    } else {
      backward_f64<k.value, Acc>(act_params<double>(s), x.data(), up.data(),
                                 dx, d_param, static_cast<int64_t>(x.size()));
    }
  });
}

ActivationSpec with_param(const ActivationSpec& spec, const Tensor& param) {
  ActivationSpec s = spec;
  if (!param.defined()) return s;
  if (spec.kind == ActivationKind::talu) s.alpha = param.item();
  if (spec.kind == ActivationKind::prelu) s.slope = param.item();
  return s;
}

}  // namespace

double act_value(const ActivationSpec& spec, double x) {
  if (numeric_mode() == NumericMode::f32) {
    return static_cast<double>(value_of<float>(spec, static_cast<float>(x)));
  }
  return value_of<double>(spec, x);
}

double act_slope(const ActivationSpec& spec, double x) {
  if (numeric_mode() == NumericMode::f32) {
    return static_cast<double>(slope_of<float>(spec, static_cast<float>(x)));
  }
  return slope_of<double>(spec, x);
}

Tensor act_forward(const ActivationSpec& spec, const Tensor& x) {
  Tensor y = Tensor::uninitialized(x.shape());
  kind_dispatch(spec.kind, [&](auto k) {
    if (numeric_mode() == NumericMode::f32) {
      forward_f32<k.value>(act_params<float>(spec), x.data().data(),
                           y.mutable_data().data(), x.size());
    } else {
      forward_f64<k.value>(act_params<double>(spec), x.data().data(),
                           y.mutable_data().data(), x.size());
    }
  });
  return y;
}

ActivationGrad act_backward(const ActivationSpec& spec, const Tensor& x,
                            const Tensor& upstream) {
  if (!same_shape(x.shape(), upstream.shape())) {
    throw ShapeError("act_backward: upstream " + shape_str(upstream.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  ActivationGrad g;
  g.d_input = Tensor::uninitialized(x.shape());
  g.has_d_param = spec.trainable_params() > 0;
  backward_bulk<false>(spec, x.data(), upstream.data(),
                       g.d_input.mutable_data().data(),
                       g.has_d_param ? &g.d_param : nullptr);
  return g;
}

Tensor talu_forward(const Tensor& x, double alpha) {
  ActivationSpec spec;
  spec.kind = ActivationKind::talu;
  spec.alpha = alpha;
  return act_forward(spec, x);
}

ActivationGrad talu_backward(const Tensor& x, double alpha,
                             const Tensor& upstream) {
  ActivationSpec spec;
  spec.kind = ActivationKind::talu;
  spec.alpha = alpha;
  return act_backward(spec, x, upstream);
}

Tensor activation(Tape& tape, const Tensor& x, const ActivationSpec& spec,
                  const Tensor& param) {
  if (param.defined() && param.size() != 1) {
    throw ShapeError("activation: trainable param must be rank-0, got " +
                     shape_str(param.shape()));
  }
  const ActivationSpec live = with_param(spec, param);
  std::shared_ptr<float[]> tcache;
  Tensor out;
  if (live.kind == ActivationKind::talu &&
      numeric_mode() == NumericMode::f32) {
    tcache = std::shared_ptr<float[]>(new float[static_cast<size_t>(x.size())]);
    out = Tensor::uninitialized(x.shape());
    forward_f32_talu_cached(act_params<float>(live), x.data().data(),
                            out.mutable_data().data(), tcache.get(), x.size());
  } else {
    out = act_forward(live, x);
  }
  std::vector<Tensor> inputs = {x};
  if (param.defined()) inputs.push_back(param);
  Tensor in = x;
  Tensor p = param;
  return tape.record(out, std::move(inputs),
                     [in, p, spec, tcache](std::span<const double> up) mutable {
    const ActivationSpec live = with_param(spec, p);
    double* dx = in.wants_grad() ? in.grad_buffer().data() : nullptr;
    double* dp = p.defined() && p.wants_grad() && live.trainable_params() > 0
                     ? &p.grad_buffer()[0]
                     : nullptr;
    if (!dx && !dp) return;
    if (tcache) {
      backward_f32_talu_cached(act_params<float>(live), tcache.get(),
                               up.data(), dx, dp,
                               static_cast<int64_t>(in.size()));
      return;
    }
    backward_bulk<true>(live, in.data(), up, dx, dp);
  });
}

}  // namespace talu
