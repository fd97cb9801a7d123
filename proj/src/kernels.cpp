#include "sddkit/kernels.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sddkit::kernels {

namespace {
Exec g_exec = Exec::parallel;
}

Exec default_exec() { return g_exec; }
void set_default_exec(Exec e) { g_exec = e; }

int worker_count() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* cap = std::getenv("SDDKIT_THREADS")) {
    int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

ConvGeom conv_geom(int in_h, int in_w, int kernel, int stride) {
  require(stride == 1 || stride == 2, "conv: stride must be 1 or 2, got ", stride);
  require(kernel == 1 || kernel == 3, "conv: kernel must be 1 or 3, got ", kernel);
  require(in_h >= 1 && in_w >= 1, "conv: empty input ", in_h, "x", in_w);
  ConvGeom g;
  g.stride = stride;
  g.kernel = kernel;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + kernel - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + kernel - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace {

template <typename T>
void check_conv_shapes(const TensorT<T>& x, const TensorT<T>& w) {
  require(x.rank() == 4, "conv: input must be rank 4, got ", shape_str(x));
  require(w.rank() == 4, "conv: weights must be rank 4, got ", shape_str(w));
  require(w.dim(2) == x.dim(3), "conv: channel mismatch, input has ", x.dim(3),
          " channels but weights expect ", w.dim(2));
}

template <typename T>
void conv2d_forward_one(const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& y,
                        const ConvGeom& g, int n, int oy) {
  const int W = x.dim(2), H = x.dim(1), Ci = x.dim(3), Co = y.dim(3);
  const int K = g.kernel;
  for (int ox = 0; ox < g.out_w; ++ox) {
    T* out = &y.at4(n, oy, ox, 0);
    for (int c = 0; c < Co; ++c) out[c] = T(0);
    for (int ky = 0; ky < K; ++ky) {
      const int iy = oy * g.stride - g.pad_top + ky;
      if (iy < 0 || iy >= H) continue;
      for (int kx = 0; kx < K; ++kx) {
        const int ix = ox * g.stride - g.pad_left + kx;
        if (ix < 0 || ix >= W) continue;
        const T* in = &x.at4(n, iy, ix, 0);
        const T* wk = &w[((static_cast<size_t>(ky) * K + kx) * Ci) * Co];
        for (int ci = 0; ci < Ci; ++ci) {
          const T a = in[ci];
          const T* wr = wk + static_cast<size_t>(ci) * Co;
          for (int c = 0; c < Co; ++c) out[c] += a * wr[c];
        }
      }
    }
  }
}

// wt: weights transposed to [K,K,Co,Ci] so the inner update runs contiguous
// over ci and vectorizes without reassociating a reduction
template <typename T>
void conv2d_backward_input_one(const TensorT<T>& dy, const std::vector<T>& wt,
                               TensorT<T>& dx, const ConvGeom& g, int n, int iy) {
  const int W = dx.dim(2), Ci = dx.dim(3), Co = dy.dim(3);
  const int K = g.kernel;
  for (int ix = 0; ix < W; ++ix) {
    T* din = &dx.at4(n, iy, ix, 0);
    for (int c = 0; c < Ci; ++c) din[c] = T(0);
    for (int ky = 0; ky < K; ++ky) {
      const int oy_num = iy + g.pad_top - ky;
      if (oy_num < 0 || oy_num % g.stride) continue;
      const int oy = oy_num / g.stride;
      if (oy >= g.out_h) continue;
      for (int kx = 0; kx < K; ++kx) {
        const int ox_num = ix + g.pad_left - kx;
        if (ox_num < 0 || ox_num % g.stride) continue;
        const int ox = ox_num / g.stride;
        if (ox >= g.out_w) continue;
        const T* gout = &dy.at4(n, oy, ox, 0);
        const T* wk = wt.data() + ((static_cast<size_t>(ky) * K + kx) * Co) * Ci;
        for (int c = 0; c < Co; ++c) {
          const T gv = gout[c];
          const T* wr = wk + static_cast<size_t>(c) * Ci;
          for (int ci = 0; ci < Ci; ++ci) din[ci] += gv * wr[ci];
        }
      }
    }
  }
}

// One (ky, kx, ci) row of dw, accumulated over the whole batch in a fixed
// order. Owning rows keeps the parallel path deterministic.
template <typename T>
void conv2d_backward_weights_row(const TensorT<T>& x, const TensorT<T>& dy,
                                 TensorT<T>& dw, const ConvGeom& g, int ky, int kx,
                                 int ci) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int Co = dy.dim(3);
  const int K = g.kernel;
  T* row = &dw[((static_cast<size_t>(ky) * K + kx) * Ci + ci) * Co];
  for (int n = 0; n < N; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      const int iy = oy * g.stride - g.pad_top + ky;
      if (iy < 0 || iy >= H) continue;
      for (int ox = 0; ox < g.out_w; ++ox) {
        const int ix = ox * g.stride - g.pad_left + kx;
        if (ix < 0 || ix >= W) continue;
        const T a = x.at4(n, iy, ix, ci);
        if (a == T(0)) continue;
        const T* gout = &dy.at4(n, oy, ox, 0);
        for (int c = 0; c < Co; ++c) row[c] += a * gout[c];
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& y,
                    int stride, Exec exec) {
  check_conv_shapes(x, w);
  const ConvGeom g = conv_geom(x.dim(1), x.dim(2), w.dim(0), stride);
  const int N = x.dim(0);
  y = TensorT<T>({N, g.out_h, g.out_w, w.dim(3)});
  const long rows = static_cast<long>(N) * g.out_h;
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long r = 0; r < rows; ++r)
      conv2d_forward_one(x, w, y, g, static_cast<int>(r / g.out_h),
                         static_cast<int>(r % g.out_h));
  } else {
    for (long r = 0; r < rows; ++r)
      conv2d_forward_one(x, w, y, g, static_cast<int>(r / g.out_h),
                         static_cast<int>(r % g.out_h));
  }
}

template <typename T>
void conv2d_backward_input(const TensorT<T>& dy, const TensorT<T>& w, TensorT<T>& dx,
                           int stride, Exec exec) {
  const ConvGeom g = conv_geom(dx.dim(1), dx.dim(2), w.dim(0), stride);
  require(dy.dim(1) == g.out_h && dy.dim(2) == g.out_w && dy.dim(3) == w.dim(3),
          "conv backward: grad shape ", shape_str(dy), " inconsistent with geometry");
  const int N = dx.dim(0), H = dx.dim(1);
  const int K = g.kernel, Ci = dx.dim(3), Co = dy.dim(3);

  std::vector<T> wt(w.size());
  for (int ky = 0; ky < K; ++ky)
    for (int kx = 0; kx < K; ++kx)
      for (int ci = 0; ci < Ci; ++ci)
        for (int c = 0; c < Co; ++c)
          wt[(((static_cast<size_t>(ky) * K + kx) * Co) + c) * Ci + ci] =
              w[(((static_cast<size_t>(ky) * K + kx) * Ci) + ci) * Co + c];

  const long rows = static_cast<long>(N) * H;
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long r = 0; r < rows; ++r)
      conv2d_backward_input_one(dy, wt, dx, g, static_cast<int>(r / H),
                                static_cast<int>(r % H));
  } else {
    for (long r = 0; r < rows; ++r)
      conv2d_backward_input_one(dy, wt, dx, g, static_cast<int>(r / H),
                                static_cast<int>(r % H));
  }
}

template <typename T>
void conv2d_backward_weights(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dw,
                             int stride, Exec exec) {
  check_conv_shapes(x, dw);
  const ConvGeom g = conv_geom(x.dim(1), x.dim(2), dw.dim(0), stride);
  require(dy.dim(1) == g.out_h && dy.dim(2) == g.out_w && dy.dim(3) == dw.dim(3),
          "conv backward: grad shape ", shape_str(dy), " inconsistent with geometry");
  const int K = g.kernel, Ci = x.dim(3);
  const long rows = static_cast<long>(K) * K * Ci;
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long r = 0; r < rows; ++r) {
      const int ci = static_cast<int>(r % Ci);
      const int kx = static_cast<int>((r / Ci) % K);
      const int ky = static_cast<int>(r / (static_cast<long>(Ci) * K));
      conv2d_backward_weights_row(x, dy, dw, g, ky, kx, ci);
    }
  } else {
    for (long r = 0; r < rows; ++r) {
      const int ci = static_cast<int>(r % Ci);
      const int kx = static_cast<int>((r / Ci) % K);
      const int ky = static_cast<int>(r / (static_cast<long>(Ci) * K));
      conv2d_backward_weights_row(x, dy, dw, g, ky, kx, ci);
    }
  }
}

namespace {

template <typename T>
void channel_moments_one(const TensorT<T>& x, std::vector<T>& mean, std::vector<T>& var,
                         int c) {
  const size_t C = static_cast<size_t>(x.dim(3));
  const size_t m = x.size() / C;
  const T* p = x.data();
  double s = 0;
  for (size_t i = 0; i < m; ++i) s += static_cast<double>(p[i * C + c]);
  const double mu = s / static_cast<double>(m);
  double s2 = 0;
  for (size_t i = 0; i < m; ++i) {
    const double d = static_cast<double>(p[i * C + c]) - mu;
    s2 += d * d;
  }
  mean[c] = static_cast<T>(mu);
  var[c] = static_cast<T>(s2 / static_cast<double>(m));
}

template <typename T>
void channel_dot_sums_one(const TensorT<T>& g, const TensorT<T>& n,
                          std::vector<T>& sum_g, std::vector<T>& sum_gn, int c) {
  const size_t C = static_cast<size_t>(g.dim(3));
  const size_t m = g.size() / C;
  const T* gp = g.data();
  const T* np = n.data();
  double sg = 0, sgn = 0;
  for (size_t i = 0; i < m; ++i) {
    const double gv = static_cast<double>(gp[i * C + c]);
    sg += gv;
    sgn += gv * static_cast<double>(np[i * C + c]);
  }
  sum_g[c] = static_cast<T>(sg);
  sum_gn[c] = static_cast<T>(sgn);
}

}  // namespace

template <typename T>
void channel_moments(const TensorT<T>& x, std::vector<T>& mean, std::vector<T>& var,
                     Exec exec) {
  require(x.rank() == 4, "moments: input must be rank 4, got ", shape_str(x));
  const int C = x.dim(3);
  mean.assign(C, T(0));
  var.assign(C, T(0));
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int c = 0; c < C; ++c) channel_moments_one(x, mean, var, c);
  } else {
    for (int c = 0; c < C; ++c) channel_moments_one(x, mean, var, c);
  }
}

template <typename T>
void channel_dot_sums(const TensorT<T>& g, const TensorT<T>& n, std::vector<T>& sum_g,
                      std::vector<T>& sum_gn, Exec exec) {
  require(g.same_shape(n), "dot sums: shape mismatch ", shape_str(g), " vs ",
          shape_str(n));
  const int C = g.dim(3);
  sum_g.assign(C, T(0));
  sum_gn.assign(C, T(0));
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int c = 0; c < C; ++c) channel_dot_sums_one(g, n, sum_g, sum_gn, c);
  } else {
    for (int c = 0; c < C; ++c) channel_dot_sums_one(g, n, sum_g, sum_gn, c);
  }
}

#define SDDKIT_INSTANTIATE(T)                                                        \
  template void conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&, \
                                  int, Exec);                                        \
  template void conv2d_backward_input<T>(const TensorT<T>&, const TensorT<T>&,      \
                                         TensorT<T>&, int, Exec);                    \
  template void conv2d_backward_weights<T>(const TensorT<T>&, const TensorT<T>&,    \
                                           TensorT<T>&, int, Exec);                  \
  template void channel_moments<T>(const TensorT<T>&, std::vector<T>&,              \
                                   std::vector<T>&, Exec);                           \
  template void channel_dot_sums<T>(const TensorT<T>&, const TensorT<T>&,           \
                                    std::vector<T>&, std::vector<T>&, Exec);

SDDKIT_INSTANTIATE(float)
SDDKIT_INSTANTIATE(double)

#undef SDDKIT_INSTANTIATE

}  // namespace sddkit::kernels
