#include <doctest.h>

#include "sddkit/augment.hpp"
#include "sddkit/kernels.hpp"
#include "sddkit/raster.hpp"
#include "sddkit/rng.hpp"

using namespace sddkit;
using kernels::Exec;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

}  // namespace

TEST_CASE("conv geometry is ceil(in/stride) with same padding") {
  auto g = kernels::conv_geom(8, 8, 3, 1);
  CHECK(g.out_h == 8);
  CHECK(g.pad_top == 1);
  g = kernels::conv_geom(8, 8, 3, 2);
  CHECK(g.out_h == 4);
  g = kernels::conv_geom(7, 7, 3, 2);
  CHECK(g.out_h == 4);
  g = kernels::conv_geom(8, 8, 1, 1);
  CHECK(g.pad_top == 0);
}

TEST_CASE("1x1 identity convolution reproduces the input") {
  Rng rng(3);
  Tensor x = random_tensor({1, 5, 5, 3}, rng);
  Tensor w({1, 1, 3, 3});
  for (int i = 0; i < 3; ++i) w[static_cast<size_t>(i * 3 + i)] = 1.0f;
  Tensor y;
  kernels::conv2d_forward(x, w, y, 1);
  CHECK(y.shape == x.shape);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("3x3 all-ones kernel sums the neighborhood") {
  Tensor x = Tensor::full({1, 5, 5, 1}, 2.0f);
  Tensor w = Tensor::full({3, 3, 1, 1}, 1.0f);
  Tensor y;
  kernels::conv2d_forward(x, w, y, 1);
  CHECK(y.at4(0, 2, 2, 0) == doctest::Approx(18.0));  // 9 * 2 at an interior pixel
  CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(8.0));   // corner sees 4 taps
}

TEST_CASE("channel mismatch raises a shape error") {
  Tensor x({1, 4, 4, 3});
  Tensor w({3, 3, 2, 4});
  Tensor y;
  CHECK_THROWS_WITH_AS(kernels::conv2d_forward(x, w, y, 1), doctest::Contains("channel"),
                       Error);
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  Rng rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 1 + rng.uniform_int(2);
    const int hw = 5 + rng.uniform_int(12);
    const int ci = 1 + rng.uniform_int(8);
    const int co = 1 + rng.uniform_int(8);
    const int k = rng.bernoulli(0.5) ? 3 : 1;
    const int stride = (k == 3 && rng.bernoulli(0.5)) ? 2 : 1;

    Tensor x = random_tensor({n, hw, hw, ci}, rng);
    Tensor w = random_tensor({k, k, ci, co}, rng);

    Tensor ys, yp;
    kernels::conv2d_forward(x, w, ys, stride, Exec::serial);
    kernels::conv2d_forward(x, w, yp, stride, Exec::parallel);
    CHECK(ys.v == yp.v);

    Tensor dxs(x.shape), dxp(x.shape);
    kernels::conv2d_backward_input(ys, w, dxs, stride, Exec::serial);
    kernels::conv2d_backward_input(yp, w, dxp, stride, Exec::parallel);
    CHECK(dxs.v == dxp.v);

    Tensor dws(w.shape), dwp(w.shape);
    kernels::conv2d_backward_weights(x, ys, dws, stride, Exec::serial);
    kernels::conv2d_backward_weights(x, yp, dwp, stride, Exec::parallel);
    CHECK(dws.v == dwp.v);

    std::vector<float> ms, vs, mp, vp;
    kernels::channel_moments(x, ms, vs, Exec::serial);
    kernels::channel_moments(x, mp, vp, Exec::parallel);
    CHECK(ms == mp);
    CHECK(vs == vp);
  }
}

TEST_CASE("image kernels are bit-identical across exec policies") {
  Rng rng(19);
  Raster img(173, 111);
  for (auto& b : img.data) b = static_cast<uint8_t>(rng.uniform_int(256));

  CHECK(motion_blur(img, 7, 41.0, Exec::serial) == motion_blur(img, 7, 41.0, Exec::parallel));
  CHECK(resize_bilinear(img, 96, 64, Exec::serial) == resize_bilinear(img, 96, 64, Exec::parallel));
  CHECK(brightness_hls(img, 0.12, Exec::serial) == brightness_hls(img, 0.12, Exec::parallel));
}
