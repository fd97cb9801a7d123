#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sddkit/head.hpp"
#include "sddkit/rng.hpp"

using namespace sddkit;

namespace {

AnchorSet spread_anchors() {
  AnchorSet set;
  set.anchors = {{6, 5}, {9, 11}, {14, 9}, {18, 20}, {28, 16}, {24, 34},
                 {44, 38}, {38, 60}, {72, 64}};
  set.levels = assign_scales(set.anchors);
  return set;
}

}  // namespace

TEST_CASE("decode maps zero logits to cell centers and anchor sizes") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const auto shapes = grid_shapes_for(size);
  const int C = 4;
  std::array<Tensor, 3> grids;
  for (int l = 0; l < 3; ++l)
    grids[static_cast<size_t>(l)] =
        Tensor({1, shapes[static_cast<size_t>(l)].h, shapes[static_cast<size_t>(l)].w, 3 * (5 + C)});

  auto dets = decode(grids, anchors, size, 0.0);
  REQUIRE(!dets[0].empty());
  // find the level-0 (stride 8) cell (1, 2), slot 0 detection
  const auto& a0 = anchors.anchors[static_cast<size_t>(anchors.levels[0][0])];
  bool found = false;
  for (const auto& d : dets[0]) {
    const Box want = Box::from_center((2 + 0.5) * 8, (1 + 0.5) * 8, a0.first, a0.second);
    if (std::abs(d.box.cx() - want.cx()) < 1e-6 && std::abs(d.box.cy() - want.cy()) < 1e-6 &&
        std::abs(d.box.width() - want.width()) < 1e-6 &&
        std::abs(d.box.height() - want.height()) < 1e-6) {
      found = true;
      CHECK(d.confidence == doctest::Approx(0.5 * 0.25));  // sigmoid(0) * uniform softmax
    }
  }
  CHECK(found);
}

TEST_CASE("decode applies the exponential size map and sigmoid confidence limit") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const auto shapes = grid_shapes_for(size);
  const int C = 2;
  std::array<Tensor, 3> grids;
  for (int l = 0; l < 3; ++l)
    grids[static_cast<size_t>(l)] =
        Tensor({1, shapes[static_cast<size_t>(l)].h, shapes[static_cast<size_t>(l)].w, 3 * (5 + C)});

  float* cell = &grids[2].at4(0, 0, 0, 0);  // stride 32 grid, slot 0
  cell[2] = std::log(2.0f);
  cell[4] = 30.0f;  // saturated objectness
  cell[5] = 10.0f;  // class 0 certain

  auto dets = decode(grids, anchors, size, 0.9);
  REQUIRE(dets[0].size() == 1);
  const auto& a = anchors.anchors[static_cast<size_t>(anchors.levels[2][0])];
  // box is clipped to the frame, so check the size through the center form
  CHECK(dets[0][0].confidence == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(dets[0][0].category == 0);
  const double expected_w = std::min(2 * a.first, 64.0 - (16.0 - a.first));
  (void)expected_w;
  CHECK(dets[0][0].box.width() >= a.first);  // doubled then clipped
}

TEST_CASE("build_targets encodes a centered anchor-sized ground truth") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const auto& a0 = anchors.anchors[static_cast<size_t>(anchors.levels[0][0])];
  // center at cell (1,1) center of the stride-8 grid
  const Box gt = Box::from_center(12, 12, a0.first, a0.second);
  const auto ts = build_targets<float>({{{2, gt}}}, anchors, size, grid_shapes_for(size), 0.5);
  CHECK(ts.positives == 1);
  CHECK(ts.collisions == 0);

  const auto& lt = ts.levels[0];
  const size_t at = lt.obj.idx4(0, 1, 1, 0);
  CHECK(lt.obj[at] == 1.0f);
  CHECK(lt.cls[at] == 2);
  CHECK(lt.coord[at * 4 + 0] == doctest::Approx(0.5));
  CHECK(lt.coord[at * 4 + 1] == doctest::Approx(0.5));
  CHECK(lt.coord[at * 4 + 2] == doctest::Approx(0.0));
  CHECK(lt.coord[at * 4 + 3] == doctest::Approx(0.0));
}

TEST_CASE("distinct best anchors give one positive per ground truth") {
  AnchorSet anchors = spread_anchors();
  const int size = 96;
  std::vector<ObjectLabel> labels = {
      {0, Box::from_center(20, 20, 6, 5)},
      {1, Box::from_center(50, 50, 28, 16)},
      {2, Box::from_center(70, 70, 72, 50)},
  };
  const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);
  CHECK(ts.positives == 3);
  CHECK(ts.collisions == 0);
}

TEST_CASE("a later ground truth claiming the same slot wins; the loser is ignored") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const Box gt = Box::from_center(12, 12, 6, 5);
  const auto ts =
      build_targets<float>({{{0, gt}, {1, gt}}}, anchors, size, grid_shapes_for(size), 0.5);
  CHECK(ts.positives == 1);
  CHECK(ts.collisions == 1);
  const auto& lt = ts.levels[0];
  const size_t at = lt.obj.idx4(0, 1, 1, 0);
  CHECK(lt.cls[at] == 1);  // the later label
}

TEST_CASE("target encode/decode round trip recovers ground truths") {
  AnchorSet anchors = spread_anchors();
  const int size = 128;
  const int C = 4;
  Rng rng(77);
  int checked = 0, skipped = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ObjectLabel> labels;
    const int n = 1 + rng.uniform_int(3);
    for (int i = 0; i < n; ++i) {
      const double w = std::exp(rng.uniform(std::log(6.0), std::log(100.0)));
      const double h = std::exp(rng.uniform(std::log(6.0), std::log(100.0)));
      const double cx = rng.uniform(w / 2, size - w / 2);
      const double cy = rng.uniform(h / 2, size - h / 2);
      labels.push_back({rng.uniform_int(C), Box::from_center(cx, cy, w, h)});
    }
    const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);
    if (ts.collisions > 0) {
      ++skipped;
      continue;
    }
    REQUIRE(ts.positives == static_cast<int>(labels.size()));

    const auto grids = oracles::targets_to_grids(ts, C);
    const auto dets = decode(grids, anchors, size, 0.5);
    REQUIRE(dets[0].size() == labels.size());
    for (const auto& gt : labels) {
      double best = 0;
      for (const auto& d : dets[0])
        if (d.category == gt.category) best = std::max(best, iou(d.box, gt.box));
      CHECK(best > 0.999);
    }
    ++checked;
  }
  CHECK(checked > 900);  // collisions must stay rare
  CHECK(skipped < 100);
}

TEST_CASE("saturated exact predictions give near-zero loss") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const int C = 4;
  std::vector<ObjectLabel> labels = {{1, Box::from_center(20, 24, 10, 12)},
                                     {3, Box::from_center(44, 40, 30, 26)}};
  const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);
  const auto grids = oracles::targets_to_grids(ts, C);
  const auto loss = total_loss(grids, ts, HeadConfig{});
  CHECK(loss.total < 1e-3);
}

TEST_CASE("loss terms scale with their lambdas") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const int C = 3;
  std::vector<ObjectLabel> labels = {{0, Box::from_center(20, 24, 10, 12)}};
  const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);

  Rng rng(31);
  std::array<Tensor, 3> grids;
  const auto shapes = grid_shapes_for(size);
  for (int l = 0; l < 3; ++l) {
    grids[static_cast<size_t>(l)] =
        Tensor({1, shapes[static_cast<size_t>(l)].h, shapes[static_cast<size_t>(l)].w, 3 * (5 + C)});
    for (auto& v : grids[static_cast<size_t>(l)].v) v = static_cast<float>(rng.uniform(-1, 1));
  }

  HeadConfig cfg;
  const auto base = total_loss(grids, ts, cfg);
  cfg.lambda_loc = 2.0;
  const auto doubled = total_loss(grids, ts, cfg);
  CHECK(doubled.loc == doctest::Approx(2 * base.loc).epsilon(1e-9));
  CHECK(doubled.conf == doctest::Approx(base.conf).epsilon(1e-12));
  CHECK(doubled.cls == doctest::Approx(base.cls).epsilon(1e-12));
  CHECK(base.total >= 0);
}

TEST_CASE("gamma zero reduces to the plain cross-entropy composite") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const int C = 3;
  std::vector<ObjectLabel> labels = {{2, Box::from_center(30, 30, 16, 18)}};
  const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);

  Rng rng(32);
  std::array<Tensor, 3> grids;
  const auto shapes = grid_shapes_for(size);
  for (int l = 0; l < 3; ++l) {
    grids[static_cast<size_t>(l)] =
        Tensor({1, shapes[static_cast<size_t>(l)].h, shapes[static_cast<size_t>(l)].w, 3 * (5 + C)});
    for (auto& v : grids[static_cast<size_t>(l)].v) v = static_cast<float>(rng.uniform(-2, 2));
  }

  HeadConfig cfg;
  cfg.gamma = 0.0;
  const auto got = total_loss(grids, ts, cfg);

  // independent composite: BCE on confidence, CE on class, SSE on coords
  double conf = 0, cls = 0, loc = 0;
  for (int l = 0; l < 3; ++l) {
    const auto& lt = ts.levels[static_cast<size_t>(l)];
    const Tensor& g = grids[static_cast<size_t>(l)];
    const int fields = 5 + C;
    for (size_t i = 0; i < lt.obj.size(); ++i) {
      const float* p = g.data() + i * static_cast<size_t>(fields);
      const bool pos = lt.obj[i] != 0;
      if (lt.ignore[i] == 0) {
        const double y = std::clamp(1.0 / (1.0 + std::exp(-static_cast<double>(p[4]))),
                                    1e-7, 1.0 - 1e-7);
        conf += pos ? -std::log(y) : -std::log(1.0 - y);
      }
      if (!pos) continue;
      double mx = p[5];
      for (int c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(p[5 + c]));
      double denom = 0;
      for (int c = 0; c < C; ++c) denom += std::exp(p[5 + c] - mx);
      cls += -std::log(std::exp(p[5 + lt.cls[i]] - mx) / denom);
      const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
      const double dx = sig(p[0]) - lt.coord[i * 4 + 0];
      const double dy = sig(p[1]) - lt.coord[i * 4 + 1];
      const double dw = p[2] - lt.coord[i * 4 + 2];
      const double dh = p[3] - lt.coord[i * 4 + 3];
      loc += dx * dx + dy * dy + dw * dw + dh * dh;
    }
  }
  CHECK(got.conf == doctest::Approx(conf).epsilon(1e-5));
  CHECK(got.cls == doctest::Approx(cls).epsilon(1e-5));
  CHECK(got.loc == doctest::Approx(loc).epsilon(1e-5));
}

TEST_CASE("ignored locations contribute no confidence gradient") {
  AnchorSet anchors = spread_anchors();
  const int size = 64;
  const int C = 2;
  // anchor-sized ground truth on a stride-16 cell center: the sibling slot's
  // prior overlaps it above the ignore threshold without being the positive
  std::vector<ObjectLabel> labels = {{0, Box::from_center(24, 24, 28, 16)}};
  const auto ts = build_targets<float>({labels}, anchors, size, grid_shapes_for(size), 0.5);

  int level = -1;
  size_t cell = 0;
  for (int l = 0; l < 3 && level < 0; ++l) {
    const auto& lt = ts.levels[static_cast<size_t>(l)];
    for (size_t i = 0; i < lt.obj.size(); ++i)
      if (lt.ignore[i] != 0 && lt.obj[i] == 0) {
        level = l;
        cell = i;
        break;
      }
  }
  REQUIRE(level >= 0);

  Rng rng(33);
  std::array<Tensor, 3> grids;
  const auto shapes = grid_shapes_for(size);
  for (int l = 0; l < 3; ++l) {
    grids[static_cast<size_t>(l)] =
        Tensor({1, shapes[static_cast<size_t>(l)].h, shapes[static_cast<size_t>(l)].w, 3 * (5 + C)});
    for (auto& v : grids[static_cast<size_t>(l)].v) v = static_cast<float>(rng.uniform(-1, 1));
  }

  std::array<Tensor, 3> dgrids;
  const auto base = total_loss(grids, ts, HeadConfig{}, &dgrids);
  const size_t slot = cell * static_cast<size_t>(5 + C) + 4;
  CHECK(dgrids[static_cast<size_t>(level)][slot] == 0.0f);

  // finite-difference spot check on the objectness logit
  const float h = 0.05f;
  grids[static_cast<size_t>(level)][slot] += h;
  const auto up = total_loss(grids, ts, HeadConfig{});
  CHECK(up.total == doctest::Approx(base.total).epsilon(1e-9));
}

TEST_CASE("predict on an untrained model with a high threshold finds nothing") {
  ModelConfig mcfg;
  mcfg.num_classes = 4;
  auto model = build_toy_detector<float>(mcfg);
  xavier_init(model, 1234);

  Raster img(80, 60);
  Rng rng(5);
  for (auto& b : img.data) b = static_cast<uint8_t>(rng.uniform_int(256));
  AnchorSet anchors = spread_anchors();
  const auto dets = predict(model, img, anchors, 64, 0.99, 0.45);
  CHECK(dets.empty());

  CHECK_THROWS_WITH_AS(predict(model, img, anchors, 60, 0.5, 0.45),
                       doctest::Contains("divisible"), Error);
}
