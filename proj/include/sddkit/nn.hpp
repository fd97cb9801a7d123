#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sddkit/kernels.hpp"
#include "sddkit/rng.hpp"
#include "sddkit/tensor.hpp"

namespace sddkit::nn {

enum class Phase { train, infer };
enum class NormMode { batch_norm, batch_renorm };

template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value, grad, m1, m2;  // m1/m2: Adam moments
  bool decay_exempt = false;

  void build(std::string n, std::vector<int> shape, T fill = T(0), bool exempt = false) {
    name = std::move(n);
    value = TensorT<T>::full(shape, fill);
    grad = TensorT<T>(shape);
    m1 = TensorT<T>(shape);
    m2 = TensorT<T>(shape);
    decay_exempt = exempt;
  }
};

using Param = ParamT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (const T& x : t.v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
void check_finite(const TensorT<T>& t, const char* context) {
  if (!all_finite(t)) fail("non-finite values after ", context);
}

// ---------------------------------------------------------------------------
// layers (fixed set; each caches what its backward pass needs)

template <typename T>
struct Conv2dT {
  int kernel = 3, stride = 1, in_ch = 0, out_ch = 0;
  bool has_bias = false;
  ParamT<T> w;  // [k, k, ci, co]
  ParamT<T> b;  // [co]
  TensorT<T> x_cache;

  void build(const std::string& name, int in, int out, int k, int s, bool bias);
  TensorT<T> forward(const TensorT<T>& x);
  TensorT<T> backward(const TensorT<T>& dy);  // accumulates w.grad / b.grad
  void params(std::vector<ParamT<T>*>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

template <typename T>
struct NormT {
  NormMode mode = NormMode::batch_norm;
  int channels = 0;
  ParamT<T> gamma, beta;
  TensorT<T> moving_mean, moving_var;
  T momentum = T(0.03);
  T eps = T(1e-5);
  T r_max = T(1.5), d_max = T(0.5);
  bool update_stats = true;  // disabled for pure-function gradient checks

  // caches for backward
  std::vector<T> inv_std_b, r_, d_;
  TensorT<T> norm_cache;  // (x - mu_B) * inv_std_b, before r/d and gamma/beta

  void build(const std::string& name, int ch, NormMode m);
  TensorT<T> forward(const TensorT<T>& x, Phase phase);
  TensorT<T> backward(const TensorT<T>& dy);
  void params(std::vector<ParamT<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

template <typename T>
struct LeakyReluT {
  T slope = T(0.1);
  TensorT<T> x_cache;

  TensorT<T> forward(const TensorT<T>& x);
  TensorT<T> backward(const TensorT<T>& dy);
};

// nearest-neighbor x2
template <typename T>
struct Upsample2xT {
  std::vector<int> in_shape;

  TensorT<T> forward(const TensorT<T>& x);
  TensorT<T> backward(const TensorT<T>& dy);
};

template <typename T>
struct ConcatT {
  int ch_a = 0, ch_b = 0;

  TensorT<T> forward(const TensorT<T>& a, const TensorT<T>& b);
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& dy);
};

// ---------------------------------------------------------------------------
// activations

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : T(1) - T(1) / (T(1) + std::exp(x));
}

template <typename T>
T leaky_relu(T x, T slope = T(0.1)) {
  return x > T(0) ? x : slope * x;
}

// softmax over the last axis, max-subtracted for stability
template <typename T>
void softmax_lastdim(TensorT<T>& t);

// in-place softmax over a contiguous span
template <typename T>
void softmax_span(T* p, int n);

// ---------------------------------------------------------------------------
// losses. Probabilities are clamped to [1e-7, 1 - 1e-7] before logs.

inline constexpr double kProbClamp = 1e-7;

template <typename T>
T clamp_prob(T y) {
  return std::min(std::max(y, T(kProbClamp)), T(1.0 - kProbClamp));
}

// focal loss on a sigmoid output; target in {0, 1}; gamma = 0 recovers BCE
template <typename T>
T focal_sigmoid_loss(T y, int target, T gamma) {
  y = clamp_prob(y);
  if (target == 1) return -std::pow(T(1) - y, gamma) * std::log(y);
  return -std::pow(y, gamma) * std::log(T(1) - y);
}

// dL/dy for focal_sigmoid_loss
template <typename T>
T focal_sigmoid_dy(T y, int target, T gamma) {
  y = clamp_prob(y);
  if (target == 1) {
    if (gamma == T(0)) return -T(1) / y;
    return gamma * std::pow(T(1) - y, gamma - T(1)) * std::log(y) -
           std::pow(T(1) - y, gamma) / y;
  }
  if (gamma == T(0)) return T(1) / (T(1) - y);
  return -gamma * std::pow(y, gamma - T(1)) * std::log(T(1) - y) +
         std::pow(y, gamma) / (T(1) - y);
}

// focal loss on the true-category softmax probability
template <typename T>
T focal_softmax_loss(T p_true, T gamma) {
  p_true = clamp_prob(p_true);
  return -std::pow(T(1) - p_true, gamma) * std::log(p_true);
}

template <typename T>
T focal_softmax_dp(T p_true, T gamma) {
  p_true = clamp_prob(p_true);
  if (gamma == T(0)) return -T(1) / p_true;
  return gamma * std::pow(T(1) - p_true, gamma - T(1)) * std::log(p_true) -
         std::pow(T(1) - p_true, gamma) / p_true;
}

template <typename T>
T sum_squared_loss(const TensorT<T>& pred, const TensorT<T>& target);

template <typename T>
TensorT<T> sum_squared_grad(const TensorT<T>& pred, const TensorT<T>& target);

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
  long step = 0;
};

// Coupled L2 decay: grad += wd * value before the moment update, skipped for
// decay-exempt params (norm gamma/beta, biases).
template <typename T>
void adam_step(const std::vector<ParamT<T>*>& params, AdamState& st, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
               double weight_decay = 0.0);

template <typename T>
void zero_grads(const std::vector<ParamT<T>*>& params);

// Xavier-uniform fill for a rank-4 conv weight: bound = sqrt(6/(fan_in+fan_out))
// with fans including the receptive field.
template <typename T>
void xavier_fill(TensorT<T>& w, Rng& rng);

}  // namespace sddkit::nn
