#include <doctest.h>

#include <numeric>

#include "sddkit/augment.hpp"

using namespace sddkit;

namespace {

Raster gradient_raster(int w, int h) {
  Raster img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = static_cast<uint8_t>((x * 7 + y * 13 + c * 31) % 256);
  return img;
}

}  // namespace

TEST_CASE("scale_crop identity and rejection") {
  Sample s{gradient_raster(40, 30), {{0, {5, 5, 20, 20}}}};
  Sample full = s;
  CHECK(scale_crop(full, 1.0, 0, 0));
  CHECK(full.raster == s.raster);
  CHECK(full.labels == s.labels);

  Sample rejected = s;
  CHECK_FALSE(scale_crop(rejected, 0.3, 28, 18));  // window misses the box
  CHECK(rejected.raster == s.raster);

  Sample shifted{gradient_raster(40, 30), {{0, {12, 12, 20, 20}}}};
  CHECK(scale_crop(shifted, 0.7, 10, 2));
  CHECK(shifted.labels[0].box == Box{2, 10, 10, 18});
}

TEST_CASE("flip mirrors boxes and is an involution") {
  Sample s{gradient_raster(100, 60), {{0, {10, 20, 30, 40}}}};
  Sample f = s;
  flip(f, FlipAxis::horizontal);
  CHECK(f.labels[0].box == Box{70, 20, 90, 40});
  flip(f, FlipAxis::horizontal);
  CHECK(f.raster == s.raster);
  CHECK(f.labels == s.labels);

  Sample v{gradient_raster(100, 60), {{0, {10, 5, 30, 25}}}};
  flip(v, FlipAxis::vertical);
  CHECK(v.labels[0].box == Box{10, 35, 30, 55});  // H - ymax, H - ymin
}

TEST_CASE("flip leaves a symmetric raster with a centered box unchanged") {
  Raster img(20, 20, 77);
  Sample s{img, {{0, {5, 5, 15, 15}}}};
  Sample f = s;
  flip(f, FlipAxis::horizontal);
  CHECK(f.raster == s.raster);
  CHECK(f.labels == s.labels);
}

TEST_CASE("motion blur kernel sums to exactly one") {
  for (int len : {1, 2, 3, 5, 8, 11, 15})
    for (double angle : {0.0, 17.0, 45.0, 90.0, 133.5, 179.0}) {
      const auto kernel = motion_blur_kernel(len, angle);
      double sum = 0;
      for (const auto& [dx, dy, w] : kernel) sum += w;
      CHECK(sum == 1.0);  // exact sum by construction
    }
}

TEST_CASE("motion blur basics") {
  Raster img = gradient_raster(24, 24);
  CHECK(motion_blur(img, 1, 30.0) == img);

  Raster flat(16, 16, 120);
  CHECK(motion_blur(flat, 9, 63.0) == flat);

  Raster impulse(9, 9, 0);
  impulse.at(4, 4, 0) = 255;
  impulse.at(4, 4, 1) = 255;
  impulse.at(4, 4, 2) = 255;
  const Raster blurred = motion_blur(impulse, 3, 0.0);
  for (int x = 3; x <= 5; ++x) CHECK(static_cast<int>(blurred.at(x, 4, 0)) == 85);
  CHECK(blurred.at(4, 3, 0) == 0);
  CHECK(blurred.at(4, 5, 0) == 0);
}

TEST_CASE("brightness in HLS space") {
  Raster img = gradient_raster(16, 16);
  const Raster same = brightness_hls(img, 0.0);
  int max_diff = 0;
  for (size_t i = 0; i < img.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(static_cast<int>(img.data[i]) - same.data[i]));
  CHECK(max_diff <= 1);

  Raster gray(4, 4, 100);
  const Raster lifted = brightness_hls(gray, 0.2);
  CHECK(static_cast<int>(lifted.at(0, 0, 0)) == 151);
  CHECK(static_cast<int>(lifted.at(0, 0, 1)) == 151);
  CHECK(static_cast<int>(lifted.at(0, 0, 2)) == 151);

  Raster white(4, 4, 255);
  CHECK(brightness_hls(white, 0.4) == white);
}

TEST_CASE("salt and pepper corruption fraction") {
  Raster img(1000, 1000, 128);
  CHECK(salt_pepper(img, 0.0, 3) == img);

  const Raster all = salt_pepper(img, 1.0, 3);
  for (size_t i = 0; i < all.data.size(); i += 3)
    CHECK((all.data[i] == 0 || all.data[i] == 255));

  const Raster some = salt_pepper(img, 0.1, 9);
  size_t corrupted = 0;
  for (size_t i = 0; i < some.data.size(); i += 3)
    if (some.data[i] != 128) ++corrupted;
  const double frac = static_cast<double>(corrupted) / (1000.0 * 1000.0);
  CHECK(frac == doctest::Approx(0.1).epsilon(0.1));
  CHECK(std::abs(frac - 0.1) < 0.01);
}

TEST_CASE("pipeline with zeroed probabilities is a pure letterbox") {
  Sample s{gradient_raster(50, 40), {{1, {5, 5, 30, 30}}}};
  AugmentConfig cfg;
  cfg.p_geom = cfg.p_flip = cfg.p_photo = 0;
  cfg.target_size = 64;
  Rng rng(4);
  const Sample out = augment_pipeline(s, cfg, rng);
  const Sample boxed = letterbox_sample(s, 64, cfg.pad_value);
  CHECK(out.raster == boxed.raster);
  CHECK(out.labels == boxed.labels);
}

TEST_CASE("pipeline is deterministic per seed") {
  Sample s{gradient_raster(50, 40), {{1, {5, 5, 30, 30}}}};
  AugmentConfig cfg;
  cfg.target_size = 64;
  Rng r1(123), r2(123);
  const Sample a = augment_pipeline(s, cfg, r1);
  const Sample b = augment_pipeline(s, cfg, r2);
  CHECK(a.raster == b.raster);  // bit-identical
  CHECK(a.labels == b.labels);
}

TEST_CASE("pipeline keeps boxes inside the output frame") {
  Sample s{gradient_raster(60, 45), {{0, {8, 8, 28, 20}}, {2, {30, 25, 55, 42}}}};
  AugmentConfig cfg;
  cfg.target_size = 64;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const Sample out = augment_pipeline(s, cfg, rng);
    for (const auto& l : out.labels) {
      CHECK(l.box.xmin >= -1e-6);
      CHECK(l.box.ymin >= -1e-6);
      CHECK(l.box.xmax <= 64 + 1e-6);
      CHECK(l.box.ymax <= 64 + 1e-6);
    }
  }
}

TEST_CASE("pipeline branch frequencies match the configured probabilities") {
  Sample s{gradient_raster(32, 32), {{0, {10, 10, 20, 20}}}};
  AugmentConfig cfg;
  cfg.target_size = 32;
  int geom = 0, flipped = 0, photo = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    Rng rng(derive_seed(99, static_cast<uint64_t>(i)));
    PipelineTrace trace;
    augment_pipeline(s, cfg, rng, &trace);
    geom += trace.geom;
    flipped += trace.flip;
    photo += trace.photo;
  }
  CHECK(std::abs(geom / double(draws) - 0.5) < 0.02);
  CHECK(std::abs(flipped / double(draws) - 1.0 / 3.0) < 0.02);
  CHECK(std::abs(photo / double(draws) - 0.25) < 0.02);
}
