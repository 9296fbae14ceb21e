#include "talu/layers.hpp"

#include <cmath>

#include "talu/error.hpp"
#include "talu/numeric.hpp"

namespace talu {

int64_t conv2d_param_count(int64_t kh, int64_t kw, int64_t in_c,
                           int64_t out_c) {
  return kh * kw * in_c * out_c + out_c;
}

int64_t dense_param_count(int64_t in, int64_t out) { return in * out + out; }

namespace {

void require_arity(const Layer& layer, size_t got) {
  if (static_cast<int>(got) != layer.arity()) {
    throw ContractError(std::string(layer.type_name()) + ": expects " +
                        std::to_string(layer.arity()) + " inputs, got " +
                        std::to_string(got));
  }
}

void glorot_uniform(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.mutable_data()) v = rng.uniform(-limit, limit);
}

}  // namespace

Conv2D::Conv2D(int64_t kh, int64_t kw, int64_t in_c, int64_t out_c,
               Padding padding, int64_t stride)
    : kh_(kh), kw_(kw), in_c_(in_c), out_c_(out_c), padding_(padding),
      stride_(stride) {
  kernel_ = Tensor::zeros({kh_, kw_, in_c_, out_c_}).set_requires_grad(true);
  bias_ = Tensor::zeros({out_c_}).set_requires_grad(true);
}

void Conv2D::init(Rng& rng) {
  glorot_uniform(kernel_, kh_ * kw_ * in_c_, kh_ * kw_ * out_c_, rng);
}

Tensor Conv2D::forward(Tape& tape, std::span<const Tensor> inputs, Mode) {
  require_arity(*this, inputs.size());
  return conv2d(tape, inputs[0], kernel_, bias_, padding_, stride_);
}

Shape Conv2D::out_shape(std::span<const Shape> inputs) const {
  return conv2d_out_shape(inputs[0], kernel_.shape(), padding_, stride_);
}

std::vector<ParamRef> Conv2D::params() {
  return {{"kernel", kernel_, true}, {"bias", bias_, true}};
}

Dense::Dense(int64_t in, int64_t out) : in_(in), out_(out) {
  weight_ = Tensor::zeros({in_, out_}).set_requires_grad(true);
  bias_ = Tensor::zeros({out_}).set_requires_grad(true);
}

void Dense::init(Rng& rng) { glorot_uniform(weight_, in_, out_, rng); }

Tensor Dense::forward(Tape& tape, std::span<const Tensor> inputs, Mode) {
  require_arity(*this, inputs.size());
  return bias_add_channels(tape, matmul(tape, inputs[0], weight_), bias_);
}

Shape Dense::out_shape(std::span<const Shape> inputs) const {
  const Shape& in = inputs[0];
  if (in.size() != 2 || in[1] != in_) {
    throw ShapeError("Dense: expects [N," + std::to_string(in_) + "], got " +
                     shape_str(in));
  }
  return {in[0], out_};
}

std::vector<ParamRef> Dense::params() {
  return {{"weight", weight_, true}, {"bias", bias_, true}};
}

BatchNorm::BatchNorm(int64_t channels, double epsilon, double momentum)
    : channels_(channels), epsilon_(epsilon), momentum_(momentum) {
  gamma_ = Tensor::full({channels_}, 1.0).set_requires_grad(true);
  beta_ = Tensor::zeros({channels_}).set_requires_grad(true);
  moving_mean_ = Tensor::zeros({channels_});
  moving_var_ = Tensor::full({channels_}, 1.0);
}

namespace {

struct BnSaved {
  std::vector<double> mean;    // per channel, as used by this pass
  std::vector<double> var;     // biased; only filled in training mode
  std::vector<double> invstd;  // 1 / sqrt(var + eps)
};

template <typename T>
BnSaved bn_forward(std::span<const double> x, std::span<double> y,
                   std::span<const double> gamma, std::span<const double> beta,
                   int64_t rows, int64_t c, double epsilon, Mode mode,
                   std::span<const double> mov_mean,
                   std::span<const double> mov_var) {
  BnSaved saved;
  saved.mean.resize(c);
  saved.invstd.resize(c);
  std::vector<T> mean(c), invstd(c);
  if (mode == Mode::training) {
    std::vector<T> acc(c, T(0));
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < c; ++j) acc[j] += static_cast<T>(x[i * c + j]);
    }
    const T inv_rows = T(1) / static_cast<T>(rows);
    for (int64_t j = 0; j < c; ++j) mean[j] = acc[j] * inv_rows;
    std::vector<T> var(c, T(0));
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < c; ++j) {
        const T d = static_cast<T>(x[i * c + j]) - mean[j];
        var[j] += d * d;
      }
    }
    saved.var.resize(c);
    for (int64_t j = 0; j < c; ++j) {
      var[j] *= inv_rows;
      invstd[j] = T(1) / std::sqrt(var[j] + static_cast<T>(epsilon));
      saved.mean[j] = static_cast<double>(mean[j]);
      saved.var[j] = static_cast<double>(var[j]);
      saved.invstd[j] = static_cast<double>(invstd[j]);
    }
  } else {
    for (int64_t j = 0; j < c; ++j) {
      mean[j] = static_cast<T>(mov_mean[j]);
      invstd[j] =
          T(1) / std::sqrt(static_cast<T>(mov_var[j]) + static_cast<T>(epsilon));
      saved.mean[j] = static_cast<double>(mean[j]);
      saved.invstd[j] = static_cast<double>(invstd[j]);
    }
  }
  std::vector<T> scale(c), shift(c);
  for (int64_t j = 0; j < c; ++j) {
    scale[j] = static_cast<T>(gamma[j]) * invstd[j];
    shift[j] = static_cast<T>(beta[j]) - mean[j] * scale[j];
  }
  const T* sc = scale.data();
  const T* sh = shift.data();
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = &x[i * c];
    double* yr = &y[i * c];
    for (int64_t j = 0; j < c; ++j) {
      yr[j] = static_cast<double>(static_cast<T>(xr[j]) * sc[j] + sh[j]);
    }
  }
  return saved;
}

// Folds this batch into the moving estimates: m <- mom * m + (1 - mom) * b.
template <typename T>
void bn_update_moving(std::span<double> mov, std::span<const double> batch,
                      double momentum) {
  const T mom = static_cast<T>(momentum);
  for (size_t j = 0; j < mov.size(); ++j) {
    mov[j] = static_cast<double>(mom * static_cast<T>(mov[j]) +
                                 (T(1) - mom) * static_cast<T>(batch[j]));
  }
}

template <typename T>
void bn_backward(std::span<const double> x, std::span<const double> up,
                 std::span<const double> gamma, const BnSaved& saved,
                 int64_t rows, int64_t c, Mode mode, double* dx, double* dgamma,
                 double* dbeta) {
  std::vector<T> mean(c), istd(c);
  for (int64_t j = 0; j < c; ++j) {
    mean[j] = static_cast<T>(saved.mean[j]);
    istd[j] = static_cast<T>(saved.invstd[j]);
  }
  std::vector<T> sum_up(c, T(0)), sum_up_xhat(c, T(0));
  {
    T* su = sum_up.data();
    T* sux = sum_up_xhat.data();
    const T* m = mean.data();
    const T* s = istd.data();
    for (int64_t i = 0; i < rows; ++i) {
      const double* xr = &x[i * c];
      const double* ur = &up[i * c];
      for (int64_t j = 0; j < c; ++j) {
        const T u = static_cast<T>(ur[j]);
        su[j] += u;
        sux[j] += u * ((static_cast<T>(xr[j]) - m[j]) * s[j]);
      }
    }
  }
  if (dbeta) {
    for (int64_t j = 0; j < c; ++j) dbeta[j] += static_cast<double>(sum_up[j]);
  }
  if (dgamma) {
    for (int64_t j = 0; j < c; ++j) {
      dgamma[j] += static_cast<double>(sum_up_xhat[j]);
    }
  }
  if (!dx) return;
  // dx for training mode, rearranged around per-channel coefficients:
  //   g*istd*(u - sum_up/rows - xhat*sum_up_xhat/rows) = a*u - q*x + r
  // with a = g*istd, q = a*istd*sum_up_xhat/rows, r = q*mean - a*sum_up/rows.
  const T inv_rows = T(1) / static_cast<T>(rows);
  std::vector<T> av(c), qv(c, T(0)), rv(c, T(0));
  for (int64_t j = 0; j < c; ++j) {
    av[j] = static_cast<T>(gamma[j]) * istd[j];
    if (mode == Mode::training) {
      qv[j] = av[j] * istd[j] * sum_up_xhat[j] * inv_rows;
      rv[j] = qv[j] * mean[j] - av[j] * sum_up[j] * inv_rows;
    }
  }
  const T* a = av.data();
  const T* q = qv.data();
  const T* r = rv.data();
  if (mode == Mode::training) {
    for (int64_t i = 0; i < rows; ++i) {
      const double* xr = &x[i * c];
      const double* ur = &up[i * c];
      double* dr = dx + i * c;
      for (int64_t j = 0; j < c; ++j) {
        dr[j] += static_cast<double>(a[j] * static_cast<T>(ur[j]) -
                                     q[j] * static_cast<T>(xr[j]) + r[j]);
      }
    }
  } else {
    for (int64_t i = 0; i < rows; ++i) {
      const double* ur = &up[i * c];
      double* dr = dx + i * c;
      for (int64_t j = 0; j < c; ++j) {
        dr[j] += static_cast<double>(a[j] * static_cast<T>(ur[j]));
      }
    }
  }
}

}  // namespace

Tensor BatchNorm::forward(Tape& tape, std::span<const Tensor> inputs,
                          Mode mode) {
  require_arity(*this, inputs.size());
  const Tensor& x = inputs[0];
  if (x.rank() < 2 || x.shape().back() != channels_) {
    throw ShapeError("BatchNorm over " + std::to_string(channels_) +
                     " channels got input " + shape_str(x.shape()));
  }
  const int64_t rows = x.size() / channels_;
  if (mode == Mode::training && rows < 2) {
    throw ContractError(
        "BatchNorm: training statistics need at least 2 rows per channel, "
        "input " + shape_str(x.shape()) + " has 1");
  }
  Tensor out = Tensor::uninitialized(x.shape());
  BnSaved saved;
  const bool f32 = numeric_mode() == NumericMode::f32;
  if (f32) {
    saved = bn_forward<float>(x.data(), out.mutable_data(), gamma_.data(),
                              beta_.data(), rows, channels_, epsilon_, mode,
                              moving_mean_.data(), moving_var_.data());
  } else {
    saved = bn_forward<double>(x.data(), out.mutable_data(), gamma_.data(),
                               beta_.data(), rows, channels_, epsilon_, mode,
                               moving_mean_.data(), moving_var_.data());
  }
  if (mode == Mode::training) {
    if (f32) {
      bn_update_moving<float>(moving_mean_.mutable_data(), saved.mean,
                              momentum_);
      bn_update_moving<float>(moving_var_.mutable_data(), saved.var,
                              momentum_);
    } else {
      bn_update_moving<double>(moving_mean_.mutable_data(), saved.mean,
                               momentum_);
      bn_update_moving<double>(moving_var_.mutable_data(), saved.var,
                               momentum_);
    }
  }
  Tensor in = x, gamma = gamma_, beta = beta_;
  const int64_t c = channels_;
  return tape.record(out, {x, gamma_, beta_},
                     [in, gamma, beta, saved, rows, c, mode](
                         std::span<const double> up) mutable {
    double* dx = in.wants_grad() ? in.grad_buffer().data() : nullptr;
    double* dg = gamma.wants_grad() ? gamma.grad_buffer().data() : nullptr;
    double* db = beta.wants_grad() ? beta.grad_buffer().data() : nullptr;
    if (!dx && !dg && !db) return;
    if (numeric_mode() == NumericMode::f32) {
      bn_backward<float>(in.data(), up, gamma.data(), saved, rows, c, mode, dx,
                         dg, db);
    } else {
      bn_backward<double>(in.data(), up, gamma.data(), saved, rows, c, mode,
                          dx, dg, db);
    }
  });
}

Shape BatchNorm::out_shape(std::span<const Shape> inputs) const {
  return inputs[0];
}

std::vector<ParamRef> BatchNorm::params() {
  return {{"gamma", gamma_, true},
          {"beta", beta_, true},
          {"moving_mean", moving_mean_, false},
          {"moving_var", moving_var_, false}};
}

MaxPool2D::MaxPool2D(int64_t window, int64_t stride)
    : window_(window), stride_(stride) {}

Tensor MaxPool2D::forward(Tape& tape, std::span<const Tensor> inputs, Mode) {
  require_arity(*this, inputs.size());
  return maxpool2d(tape, inputs[0], window_, stride_, /*floor_odd=*/true);
}

Shape MaxPool2D::out_shape(std::span<const Shape> inputs) const {
  const Shape& in = inputs[0];
  if (in.size() != 4) {
    throw ShapeError("MaxPooling2D: expects [N,H,W,C], got " + shape_str(in));
  }
  return {in[0], (in[1] - window_) / stride_ + 1,
          (in[2] - window_) / stride_ + 1, in[3]};
}

Tensor FlattenLayer::forward(Tape& tape, std::span<const Tensor> inputs,
                             Mode) {
  require_arity(*this, inputs.size());
  return flatten(tape, inputs[0]);
}

Shape FlattenLayer::out_shape(std::span<const Shape> inputs) const {
  const Shape& in = inputs[0];
  int64_t width = 1;
  for (size_t i = 1; i < in.size(); ++i) width *= in[i];
  return {in[0], width};
}

Tensor AddLayer::forward(Tape& tape, std::span<const Tensor> inputs, Mode) {
  require_arity(*this, inputs.size());
  return add(tape, inputs[0], inputs[1]);
}

Shape AddLayer::out_shape(std::span<const Shape> inputs) const {
  if (!same_shape(inputs[0], inputs[1])) {
    throw ShapeError("Add: shapes disagree: " + shape_str(inputs[0]) +
                     " vs " + shape_str(inputs[1]));
  }
  return inputs[0];
}

ActivationLayer::ActivationLayer(const ActivationSpec& spec) : spec_(spec) {
  if (spec_.trainable_params() > 0) {
    param_ = Tensor::scalar(spec_.param_init()).set_requires_grad(true);
  }
}

Tensor ActivationLayer::forward(Tape& tape, std::span<const Tensor> inputs,
                                Mode) {
  require_arity(*this, inputs.size());
  return activation(tape, inputs[0], spec_, param_);
}

Shape ActivationLayer::out_shape(std::span<const Shape> inputs) const {
  return inputs[0];
}

std::vector<ParamRef> ActivationLayer::params() {
  if (!param_.defined()) return {};
  const char* name = spec_.kind == ActivationKind::talu ? "alpha" : "slope";
  return {{name, param_, true}};
}

std::string_view ActivationLayer::type_name() const {
  return activation_display_name(spec_.kind);
}

}  // namespace talu
