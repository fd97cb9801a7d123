// Timings for the dual-path kernels: serial reference vs OpenMP. Both paths
// compute bit-identical results (asserted here on every case); this target
// reports the speedup.

#include <chrono>
#include <cstdio>
#include <functional>

#include "sddkit/augment.hpp"
#include "sddkit/kernels.hpp"
#include "sddkit/raster.hpp"
#include "sddkit/rng.hpp"

using namespace sddkit;
using kernels::Exec;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void row(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx  %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", kernels::worker_count());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(42);
  const int reps = 5;

  {
    Tensor x = random_tensor({2, 64, 64, 32}, rng);
    Tensor w = random_tensor({3, 3, 32, 64}, rng);
    Tensor ys, yp;
    const double s = time_ms([&] { kernels::conv2d_forward(x, w, ys, 1, Exec::serial); }, reps);
    const double p = time_ms([&] { kernels::conv2d_forward(x, w, yp, 1, Exec::parallel); }, reps);
    row("conv2d_forward 3x3", s, p, ys.v == yp.v);

    Tensor dxs(x.shape), dxp(x.shape);
    const double sbi = time_ms([&] { kernels::conv2d_backward_input(ys, w, dxs, 1, Exec::serial); }, reps);
    const double pbi = time_ms([&] { kernels::conv2d_backward_input(ys, w, dxp, 1, Exec::parallel); }, reps);
    row("conv2d_backward_input", sbi, pbi, dxs.v == dxp.v);

    Tensor dws(w.shape), dwp(w.shape);
    const double sbw = time_ms([&] { dws.zero(); kernels::conv2d_backward_weights(x, ys, dws, 1, Exec::serial); }, reps);
    const double pbw = time_ms([&] { dwp.zero(); kernels::conv2d_backward_weights(x, ys, dwp, 1, Exec::parallel); }, reps);
    row("conv2d_backward_weights", sbw, pbw, dws.v == dwp.v);
  }

  {
    Tensor x = random_tensor({4, 64, 64, 64}, rng);
    std::vector<float> ms, vs, mp, vp;
    const double s = time_ms([&] { kernels::channel_moments(x, ms, vs, Exec::serial); }, reps);
    const double p = time_ms([&] { kernels::channel_moments(x, mp, vp, Exec::parallel); }, reps);
    row("channel_moments", s, p, ms == mp && vs == vp);
  }

  {
    Raster img(1024, 768);
    for (size_t i = 0; i < img.data.size(); ++i)
      img.data[i] = static_cast<uint8_t>(rng.uniform_int(256));
    Raster bs, bp;
    const double s = time_ms([&] { bs = motion_blur(img, 11, 30.0, Exec::serial); }, reps);
    const double p = time_ms([&] { bp = motion_blur(img, 11, 30.0, Exec::parallel); }, reps);
    row("motion_blur 11px", s, p, bs == bp);

    Raster rs, rp;
    const double s2 = time_ms([&] { rs = resize_bilinear(img, 416, 416, Exec::serial); }, reps);
    const double p2 = time_ms([&] { rp = resize_bilinear(img, 416, 416, Exec::parallel); }, reps);
    row("resize_bilinear", s2, p2, rs == rp);

    Raster hs, hp;
    const double s3 = time_ms([&] { hs = brightness_hls(img, 0.15, Exec::serial); }, reps);
    const double p3 = time_ms([&] { hp = brightness_hls(img, 0.15, Exec::parallel); }, reps);
    row("brightness_hls", s3, p3, hs == hp);
  }

  return 0;
}
