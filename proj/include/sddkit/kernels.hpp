#pragma once

#include "sddkit/tensor.hpp"

namespace sddkit::kernels {

// Every kernel here comes in two flavors behind one entry point: a serial
// reference loop and an OpenMP version. Parallel loops own whole output
// elements and keep a fixed inner summation order, so both flavors produce
// bit-identical results; tests assert that.
enum class Exec { serial, parallel };

Exec default_exec();
void set_default_exec(Exec e);

// Worker cap: min(omp_get_max_threads(), $SDDKIT_THREADS if set).
int worker_count();

struct ConvGeom {
  int stride = 1;
  int kernel = 1;
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;
};

// Same-padding geometry: out = ceil(in / stride), pad split floor/remainder.
ConvGeom conv_geom(int in_h, int in_w, int kernel, int stride);

// x: [N,H,W,Ci], w: [kh,kw,Ci,Co], y: [N,OH,OW,Co]
template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& y,
                    int stride, Exec exec = default_exec());

template <typename T>
void conv2d_backward_input(const TensorT<T>& dy, const TensorT<T>& w,
                           TensorT<T>& dx, int stride, Exec exec = default_exec());

// Accumulates into dw (callers zero or accumulate across batches explicitly).
template <typename T>
void conv2d_backward_weights(const TensorT<T>& x, const TensorT<T>& dy,
                             TensorT<T>& dw, int stride, Exec exec = default_exec());

// Per-channel mean and biased variance over N*H*W.
template <typename T>
void channel_moments(const TensorT<T>& x, std::vector<T>& mean, std::vector<T>& var,
                     Exec exec = default_exec());

// Per-channel sums of g and g*n used by the normalization backward pass.
template <typename T>
void channel_dot_sums(const TensorT<T>& g, const TensorT<T>& n, std::vector<T>& sum_g,
                      std::vector<T>& sum_gn, Exec exec = default_exec());

}  // namespace sddkit::kernels
