#include "sddkit/nn.hpp"

#include <algorithm>

#include "sddkit/common.hpp"

namespace sddkit::nn {

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
void Conv2dT<T>::build(const std::string& name, int in, int out, int k, int s, bool bias) {
  in_ch = in;
  out_ch = out;
  kernel = k;
  stride = s;
  has_bias = bias;
  w.build(name + ".w", {k, k, in, out});
  if (bias) b.build(name + ".b", {out}, T(0), /*exempt=*/true);
}

template <typename T>
TensorT<T> Conv2dT<T>::forward(const TensorT<T>& x) {
  x_cache = x;
  TensorT<T> y;
  kernels::conv2d_forward(x, w.value, y, stride);
  if (has_bias) {
    const size_t co = static_cast<size_t>(out_ch);
    const size_t rows = y.size() / co;
    for (size_t i = 0; i < rows; ++i) {
      T* p = y.data() + i * co;
      for (size_t c = 0; c < co; ++c) p[c] += b.value[c];
    }
  }
  return y;
}

template <typename T>
TensorT<T> Conv2dT<T>::backward(const TensorT<T>& dy) {
  require(x_cache.size() > 0, "conv backward before forward");
  if (has_bias) {
    const size_t co = static_cast<size_t>(out_ch);
    const size_t rows = dy.size() / co;
    for (size_t i = 0; i < rows; ++i) {
      const T* p = dy.data() + i * co;
      for (size_t c = 0; c < co; ++c) b.grad[c] += p[c];
    }
  }
  kernels::conv2d_backward_weights(x_cache, dy, w.grad, stride);
  TensorT<T> dx(x_cache.shape);
  kernels::conv2d_backward_input(dy, w.value, dx, stride);
  return dx;
}

// ---------------------------------------------------------------------------
// Norm: one code path for both modes; batch norm is the r = 1, d = 0 case.

template <typename T>
void NormT<T>::build(const std::string& name, int ch, NormMode m) {
  channels = ch;
  mode = m;
  gamma.build(name + ".gamma", {ch}, T(1), /*exempt=*/true);
  beta.build(name + ".beta", {ch}, T(0), /*exempt=*/true);
  moving_mean = TensorT<T>({ch});
  moving_var = TensorT<T>::full({ch}, T(1));
}

template <typename T>
TensorT<T> NormT<T>::forward(const TensorT<T>& x, Phase phase) {
  require(x.rank() == 4 && x.dim(3) == channels, "norm: expected ", channels,
          " channels, got ", shape_str(x));
  const size_t C = static_cast<size_t>(channels);
  const size_t rows = x.size() / C;
  TensorT<T> y(x.shape);

  if (phase == Phase::infer) {
    std::vector<T> scale(C), shift(C);
    for (size_t c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(moving_var[c] + eps);
      scale[c] = gamma.value[c] * inv;
      shift[c] = beta.value[c] - moving_mean[c] * scale[c];
    }
    for (size_t i = 0; i < rows; ++i) {
      const T* xp = x.data() + i * C;
      T* yp = y.data() + i * C;
      for (size_t c = 0; c < C; ++c) yp[c] = xp[c] * scale[c] + shift[c];
    }
    norm_cache = TensorT<T>();  // train-phase caches are stale now
    return y;
  }

  std::vector<T> mean_b, var_b;
  kernels::channel_moments(x, mean_b, var_b);

  inv_std_b.assign(C, T(0));
  r_.assign(C, T(1));
  d_.assign(C, T(0));
  for (size_t c = 0; c < C; ++c) {
    inv_std_b[c] = T(1) / std::sqrt(var_b[c] + eps);
    if (mode == NormMode::batch_renorm) {
      // r, d from the pre-update moving statistics; treated as constants in
      // the backward pass
      const T sigma = std::sqrt(moving_var[c] + eps);
      const T sigma_b = std::sqrt(var_b[c] + eps);
      r_[c] = std::clamp(sigma_b / sigma, T(1) / r_max, r_max);
      d_[c] = std::clamp((mean_b[c] - moving_mean[c]) / sigma, -d_max, d_max);
    }
  }

  norm_cache = TensorT<T>(x.shape);
  for (size_t i = 0; i < rows; ++i) {
    const T* xp = x.data() + i * C;
    T* np = norm_cache.data() + i * C;
    T* yp = y.data() + i * C;
    for (size_t c = 0; c < C; ++c) {
      np[c] = (xp[c] - mean_b[c]) * inv_std_b[c];
      yp[c] = gamma.value[c] * (np[c] * r_[c] + d_[c]) + beta.value[c];
    }
  }

  if (update_stats) {
    for (size_t c = 0; c < C; ++c) {
      moving_mean[c] = (T(1) - momentum) * moving_mean[c] + momentum * mean_b[c];
      moving_var[c] = (T(1) - momentum) * moving_var[c] + momentum * var_b[c];
    }
  }
  return y;
}

template <typename T>
TensorT<T> NormT<T>::backward(const TensorT<T>& dy) {
  require(norm_cache.size() == dy.size(), "norm backward before train forward");
  const size_t C = static_cast<size_t>(channels);
  const size_t rows = dy.size() / C;
  const T m = static_cast<T>(rows);

  // g = dL/d(normalized x) before the r factor; param grads alongside
  TensorT<T> g(dy.shape);
  for (size_t i = 0; i < rows; ++i) {
    const T* dyp = dy.data() + i * C;
    const T* np = norm_cache.data() + i * C;
    T* gp = g.data() + i * C;
    for (size_t c = 0; c < C; ++c) {
      gp[c] = dyp[c] * gamma.value[c];
      beta.grad[c] += dyp[c];
      gamma.grad[c] += dyp[c] * (np[c] * r_[c] + d_[c]);
    }
  }

  std::vector<T> sum_g, sum_gn;
  kernels::channel_dot_sums(g, norm_cache, sum_g, sum_gn);

  TensorT<T> dx(dy.shape);
  for (size_t i = 0; i < rows; ++i) {
    const T* gp = g.data() + i * C;
    const T* np = norm_cache.data() + i * C;
    T* dxp = dx.data() + i * C;
    for (size_t c = 0; c < C; ++c) {
      dxp[c] = r_[c] * inv_std_b[c] * (gp[c] - sum_g[c] / m - np[c] * sum_gn[c] / m);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> LeakyReluT<T>::forward(const TensorT<T>& x) {
  x_cache = x;
  TensorT<T> y(x.shape);
  for (size_t i = 0; i < x.size(); ++i) y[i] = leaky_relu(x[i], slope);
  return y;
}

template <typename T>
TensorT<T> LeakyReluT<T>::backward(const TensorT<T>& dy) {
  TensorT<T> dx(dy.shape);
  for (size_t i = 0; i < dy.size(); ++i)
    dx[i] = x_cache[i] > T(0) ? dy[i] : slope * dy[i];
  return dx;
}

template <typename T>
TensorT<T> Upsample2xT<T>::forward(const TensorT<T>& x) {
  in_shape = x.shape;
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  TensorT<T> y({N, 2 * H, 2 * W, C});
  for (int n = 0; n < N; ++n)
    for (int yy = 0; yy < 2 * H; ++yy)
      for (int xx = 0; xx < 2 * W; ++xx) {
        const T* src = &x.at4(n, yy / 2, xx / 2, 0);
        T* dst = &y.at4(n, yy, xx, 0);
        std::copy_n(src, C, dst);
      }
  return y;
}

template <typename T>
TensorT<T> Upsample2xT<T>::backward(const TensorT<T>& dy) {
  TensorT<T> dx(in_shape);
  const int N = dx.dim(0), H = dx.dim(1), W = dx.dim(2), C = dx.dim(3);
  for (int n = 0; n < N; ++n)
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx) {
        T* dst = &dx.at4(n, yy, xx, 0);
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            const T* src = &dy.at4(n, 2 * yy + sy, 2 * xx + sx, 0);
            for (int c = 0; c < C; ++c) dst[c] += src[c];
          }
      }
  return dx;
}

template <typename T>
TensorT<T> ConcatT<T>::forward(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          "concat: spatial shapes differ: ", shape_str(a), " vs ", shape_str(b));
  ch_a = a.dim(3);
  ch_b = b.dim(3);
  TensorT<T> y({a.dim(0), a.dim(1), a.dim(2), ch_a + ch_b});
  const size_t rows = y.size() / static_cast<size_t>(ch_a + ch_b);
  for (size_t i = 0; i < rows; ++i) {
    std::copy_n(a.data() + i * ch_a, ch_a, y.data() + i * (ch_a + ch_b));
    std::copy_n(b.data() + i * ch_b, ch_b, y.data() + i * (ch_a + ch_b) + ch_a);
  }
  return y;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> ConcatT<T>::backward(const TensorT<T>& dy) {
  TensorT<T> da({dy.dim(0), dy.dim(1), dy.dim(2), ch_a});
  TensorT<T> db({dy.dim(0), dy.dim(1), dy.dim(2), ch_b});
  const size_t rows = dy.size() / static_cast<size_t>(ch_a + ch_b);
  for (size_t i = 0; i < rows; ++i) {
    std::copy_n(dy.data() + i * (ch_a + ch_b), ch_a, da.data() + i * ch_a);
    std::copy_n(dy.data() + i * (ch_a + ch_b) + ch_a, ch_b, db.data() + i * ch_b);
  }
  return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------

template <typename T>
void softmax_span(T* p, int n) {
  T mx = p[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, p[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(p[i] - mx);
    sum += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= sum;
}

template <typename T>
void softmax_lastdim(TensorT<T>& t) {
  const int n = t.dim(t.rank() - 1);
  const size_t rows = t.size() / static_cast<size_t>(n);
  for (size_t i = 0; i < rows; ++i) softmax_span(t.data() + i * n, n);
}

template <typename T>
T sum_squared_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  require(pred.same_shape(target), "sum_squared: shape mismatch ", shape_str(pred),
          " vs ", shape_str(target));
  T s = T(0);
  for (size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    s += d * d;
  }
  return s;
}

template <typename T>
TensorT<T> sum_squared_grad(const TensorT<T>& pred, const TensorT<T>& target) {
  require(pred.same_shape(target), "sum_squared: shape mismatch");
  TensorT<T> g(pred.shape);
  for (size_t i = 0; i < pred.size(); ++i) g[i] = T(2) * (pred[i] - target[i]);
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
void adam_step(const std::vector<ParamT<T>*>& params, AdamState& st, double lr,
               double beta1, double beta2, double eps, double weight_decay) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (ParamT<T>* p : params) {
    const double wd = p->decay_exempt ? 0.0 : weight_decay;
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + wd * static_cast<double>(p->value[i]);
      const double m1 = beta1 * static_cast<double>(p->m1[i]) + (1.0 - beta1) * g;
      const double m2 = beta2 * static_cast<double>(p->m2[i]) + (1.0 - beta2) * g * g;
      p->m1[i] = static_cast<T>(m1);
      p->m2[i] = static_cast<T>(m2);
      p->value[i] -= static_cast<T>(lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + eps));
    }
  }
}

template <typename T>
void zero_grads(const std::vector<ParamT<T>*>& params) {
  for (ParamT<T>* p : params) p->grad.zero();
}

template <typename T>
void xavier_fill(TensorT<T>& w, Rng& rng) {
  require(w.rank() == 4, "xavier: expected rank-4 conv weight, got ", shape_str(w));
  const double rf = static_cast<double>(w.dim(0)) * w.dim(1);
  const double fan_in = rf * w.dim(2);
  const double fan_out = rf * w.dim(3);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

#define SDDKIT_NN_INSTANTIATE(T)                                                   \
  template struct Conv2dT<T>;                                                      \
  template struct NormT<T>;                                                        \
  template struct LeakyReluT<T>;                                                   \
  template struct Upsample2xT<T>;                                                  \
  template struct ConcatT<T>;                                                      \
  template void softmax_lastdim<T>(TensorT<T>&);                                   \
  template void softmax_span<T>(T*, int);                                          \
  template T sum_squared_loss<T>(const TensorT<T>&, const TensorT<T>&);            \
  template TensorT<T> sum_squared_grad<T>(const TensorT<T>&, const TensorT<T>&);   \
  template void adam_step<T>(const std::vector<ParamT<T>*>&, AdamState&, double,   \
                             double, double, double, double);                      \
  template void zero_grads<T>(const std::vector<ParamT<T>*>&);                     \
  template void xavier_fill<T>(TensorT<T>&, Rng&);

SDDKIT_NN_INSTANTIATE(float)
SDDKIT_NN_INSTANTIATE(double)

#undef SDDKIT_NN_INSTANTIATE

}  // namespace sddkit::nn
