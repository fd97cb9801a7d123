#include <doctest.h>

#include "sddkit/geometry.hpp"
#include "sddkit/rng.hpp"

using namespace sddkit;

namespace {
Box random_box(Rng& rng, double extent = 100) {
  const double x0 = rng.uniform(0, extent), y0 = rng.uniform(0, extent);
  return {x0, y0, x0 + rng.uniform(0, extent), y0 + rng.uniform(0, extent)};
}
}  // namespace

TEST_CASE("iou basics") {
  const Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, Box{10, 10, 12, 12}) == 0.0);
  CHECK(iou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0).epsilon(1e-9));
  // empty union
  CHECK(iou(Box{1, 1, 1, 1}, Box{2, 2, 2, 2}) == 0.0);
}

TEST_CASE("iou properties on random pairs") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(iou(b, a)).epsilon(1e-12));
  }
  const Box a = random_box(rng);
  CHECK(iou(a, a) == doctest::Approx(1.0));
}

TEST_CASE("wh_iou") {
  CHECK(wh_iou(2, 2, 2, 2) == doctest::Approx(1.0));
  CHECK(wh_iou(2, 2, 4, 4) == doctest::Approx(0.25));
  CHECK(wh_iou(0, 0, 4, 4) == 0.0);
}

TEST_CASE("wh_iou equals iou of corner-anchored boxes") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double aw = rng.uniform(0.1, 50), ah = rng.uniform(0.1, 50);
    const double bw = rng.uniform(0.1, 50), bh = rng.uniform(0.1, 50);
    const double via_boxes = iou(Box{0, 0, aw, ah}, Box{0, 0, bw, bh});
    CHECK(wh_iou(aw, ah, bw, bh) == doctest::Approx(via_boxes).epsilon(1e-12));
  }
}

TEST_CASE("nms keeps the strongest of overlapping same-category detections") {
  const Box b1{0, 0, 10, 10};
  const Box b2{0.5, 0.5, 10.5, 10.5};  // IoU ~0.82
  std::vector<Detection> dets = {{b2, 0, 0.8}, {b1, 0, 0.9}};
  auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].confidence == 0.9);

  // same boxes, different categories: both stay
  dets = {{b2, 1, 0.8}, {b1, 0, 0.9}};
  kept = nms(dets, 0.5);
  CHECK(kept.size() == 2);
  CHECK(kept[0].confidence >= kept[1].confidence);

  CHECK(nms({}, 0.5).empty());
}

TEST_CASE("nms output is a subset with no same-category overlap above threshold") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 30; ++i) {
      Detection d;
      const double x0 = rng.uniform(0, 40), y0 = rng.uniform(0, 40);
      d.box = {x0, y0, x0 + rng.uniform(5, 20), y0 + rng.uniform(5, 20)};
      d.category = rng.uniform_int(3);
      d.confidence = rng.uniform();
      dets.push_back(d);
    }
    const double thr = 0.4;
    auto kept = nms(dets, thr);
    CHECK(kept.size() <= dets.size());
    for (size_t i = 0; i < kept.size(); ++i)
      for (size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].category == kept[j].category)
          CHECK(iou(kept[i].box, kept[j].box) <= thr);
    for (size_t i = 0; i + 1 < kept.size(); ++i)
      CHECK(kept[i].confidence >= kept[i + 1].confidence);
  }
}

TEST_CASE("letterbox 400x300 into 416") {
  const auto t = LetterboxTransform::fit(400, 300, 416);
  CHECK(t.scale == doctest::Approx(1.04));
  CHECK(t.pad_x == 0);
  CHECK(t.pad_y == 52);
  const Box mapped = t.apply(Box{0, 0, 400, 300});
  CHECK(mapped.xmin == doctest::Approx(0));
  CHECK(mapped.ymin == doctest::Approx(52));
  CHECK(mapped.xmax == doctest::Approx(416));
  CHECK(mapped.ymax == doctest::Approx(364));
}

TEST_CASE("letterbox identity on square source equal to target") {
  const auto t = LetterboxTransform::fit(416, 416, 416);
  CHECK(t.scale == doctest::Approx(1.0));
  CHECK(t.pad_x == 0);
  CHECK(t.pad_y == 0);
}

TEST_CASE("letterbox apply then invert is the identity") {
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    const int sw = 10 + rng.uniform_int(2000), sh = 10 + rng.uniform_int(2000);
    const auto t = LetterboxTransform::fit(sw, sh, 416);
    Box b = random_box(rng, std::min(sw, sh) / 2.0);
    const Box back = t.invert(t.apply(b));
    CHECK(std::abs(back.xmin - b.xmin) < 1e-6);
    CHECK(std::abs(back.ymin - b.ymin) < 1e-6);
    CHECK(std::abs(back.xmax - b.xmax) < 1e-6);
    CHECK(std::abs(back.ymax - b.ymax) < 1e-6);
  }
}
