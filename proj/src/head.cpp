#include "sddkit/head.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sddkit/augment.hpp"
#include "sddkit/common.hpp"

namespace sddkit {

namespace {

// (level, slot) of an anchor index inside an AnchorSet
std::pair<int, int> locate_anchor(const AnchorSet& set, int anchor_idx) {
  for (int l = 0; l < 3; ++l)
    for (size_t s = 0; s < set.levels[static_cast<size_t>(l)].size(); ++s)
      if (set.levels[static_cast<size_t>(l)][s] == anchor_idx)
        return {l, static_cast<int>(s)};
  fail("anchor index ", anchor_idx, " not present in any level");
}

}  // namespace

template <typename T>
TargetSetT<T> build_targets(const std::vector<std::vector<ObjectLabel>>& labels,
                            const AnchorSet& anchors, int input_size,
                            const std::array<GridShape, 3>& grids,
                            double ignore_threshold) {
  require(!anchors.anchors.empty() && anchors.levels.size() == 3,
          "build_targets: anchor set with 3 levels required");
  const int batch = static_cast<int>(labels.size());
  const int slots = static_cast<int>(anchors.levels[0].size());

  TargetSetT<T> ts;
  for (int l = 0; l < 3; ++l) {
    auto& lt = ts.levels[static_cast<size_t>(l)];
    lt.h = grids[static_cast<size_t>(l)].h;
    lt.w = grids[static_cast<size_t>(l)].w;
    lt.stride = static_cast<double>(input_size) / lt.h;
    lt.obj = TensorT<T>({batch, lt.h, lt.w, slots});
    lt.ignore = TensorT<T>({batch, lt.h, lt.w, slots});
    lt.coord = TensorT<T>({batch, lt.h, lt.w, slots, 4});
    lt.cls.assign(static_cast<size_t>(batch) * lt.h * lt.w * slots, -1);
  }

  for (int n = 0; n < batch; ++n) {
    const auto& img_labels = labels[static_cast<size_t>(n)];

    // ignore band: priors overlapping any ground truth above the threshold
    for (int l = 0; l < 3; ++l) {
      auto& lt = ts.levels[static_cast<size_t>(l)];
      for (int cy = 0; cy < lt.h; ++cy)
        for (int cx = 0; cx < lt.w; ++cx)
          for (int s = 0; s < slots; ++s) {
            const auto& a =
                anchors.anchors[static_cast<size_t>(anchors.levels[static_cast<size_t>(l)][static_cast<size_t>(s)])];
            const Box prior = Box::from_center((cx + 0.5) * lt.stride,
                                               (cy + 0.5) * lt.stride, a.first, a.second);
            for (const auto& gt : img_labels) {
              if (iou(prior, gt.box) > ignore_threshold) {
                lt.ignore[lt.obj.idx4(n, cy, cx, s)] = T(1);
                break;
              }
            }
          }
    }

    // positives: best anchor over all levels per ground truth
    for (const auto& gt : img_labels) {
      const double gw = gt.box.width(), gh = gt.box.height();
      require(gw > 0 && gh > 0, "build_targets: degenerate ground-truth box");
      int best_anchor = 0;
      double best = -1;
      for (size_t a = 0; a < anchors.anchors.size(); ++a) {
        const double v = wh_iou(gw, gh, anchors.anchors[a].first, anchors.anchors[a].second);
        if (v > best) {
          best = v;
          best_anchor = static_cast<int>(a);
        }
      }
      const auto [l, s] = locate_anchor(anchors, best_anchor);
      auto& lt = ts.levels[static_cast<size_t>(l)];
      const double gcx = gt.box.cx() / lt.stride;
      const double gcy = gt.box.cy() / lt.stride;
      const int cx = std::clamp(static_cast<int>(std::floor(gcx)), 0, lt.w - 1);
      const int cy = std::clamp(static_cast<int>(std::floor(gcy)), 0, lt.h - 1);
      const size_t at = lt.obj.idx4(n, cy, cx, s);

      if (lt.obj[at] != T(0)) {
        // slot already claimed: demote the earlier positive to ignore
        lt.obj[at] = T(0);
        lt.ignore[at] = T(1);
        lt.cls[at] = -1;
        ++ts.collisions;
        --ts.positives;
      }

      const auto& a = anchors.anchors[static_cast<size_t>(best_anchor)];
      lt.obj[at] = T(1);
      lt.ignore[at] = T(0);
      lt.cls[at] = gt.category;
      T* coord = &lt.coord[at * 4];
      coord[0] = static_cast<T>(std::clamp(gcx - cx, 0.0, 1.0 - 1e-6));
      coord[1] = static_cast<T>(std::clamp(gcy - cy, 0.0, 1.0 - 1e-6));
      coord[2] = static_cast<T>(std::log(gw / a.first));
      coord[3] = static_cast<T>(std::log(gh / a.second));
      ++ts.positives;
    }
  }
  return ts;
}

template <typename T>
LossBreakdown total_loss(const std::array<TensorT<T>, 3>& grids,
                         const TargetSetT<T>& targets, const HeadConfig& cfg,
                         std::array<TensorT<T>, 3>* dgrids) {
  const int batch = grids[0].dim(0);
  const T gamma = static_cast<T>(cfg.gamma);
  double conf_sum = 0, cls_sum = 0, loc_sum = 0;

  for (int l = 0; l < 3; ++l) {
    const TensorT<T>& g = grids[static_cast<size_t>(l)];
    const auto& lt = targets.levels[static_cast<size_t>(l)];
    const int slots = lt.obj.dim(3);
    const int fields = g.dim(3) / slots;  // 5 + C
    const int C = fields - 5;
    require(g.dim(1) == lt.h && g.dim(2) == lt.w && g.dim(3) == slots * fields,
            "total_loss: grid ", shape_str(g), " does not match targets");
    TensorT<T>* dg = dgrids ? &(*dgrids)[static_cast<size_t>(l)] : nullptr;
    if (dg && !dg->same_shape(g)) *dg = TensorT<T>(g.shape);

    const size_t cells = g.size() / static_cast<size_t>(fields);
    std::vector<T> probs(static_cast<size_t>(C));
    for (size_t i = 0; i < cells; ++i) {
      const T* p = g.data() + i * static_cast<size_t>(fields);
      T* dp = dg ? dg->data() + i * static_cast<size_t>(fields) : nullptr;
      const bool positive = lt.obj[i] != T(0);
      const bool ignored = lt.ignore[i] != T(0);

      // confidence term over everything not ignored
      if (!ignored) {
        const T y = nn::sigmoid(p[4]);
        conf_sum += static_cast<double>(nn::focal_sigmoid_loss(y, positive ? 1 : 0, gamma));
        if (dp) {
          const T yc = nn::clamp_prob(y);
          dp[4] += static_cast<T>(cfg.lambda_conf / batch) *
                   nn::focal_sigmoid_dy(y, positive ? 1 : 0, gamma) * yc * (T(1) - yc);
        }
      }

      if (!positive) continue;

      // classification at positives
      std::copy_n(p + 5, C, probs.data());
      nn::softmax_span(probs.data(), C);
      const int truth = lt.cls[i];
      const T pt = probs[static_cast<size_t>(truth)];
      cls_sum += static_cast<double>(nn::focal_softmax_loss(pt, gamma));
      if (dp) {
        const T dpt = nn::focal_softmax_dp(pt, gamma) * static_cast<T>(cfg.lambda_cls / batch);
        for (int c = 0; c < C; ++c) {
          const T delta = (c == truth) ? T(1) : T(0);
          dp[5 + c] += dpt * pt * (delta - probs[static_cast<size_t>(c)]);
        }
      }

      // localization at positives: (sig(tx), sig(ty), tw, th) vs targets
      const T* tc = &lt.coord[i * 4];
      const T sx = nn::sigmoid(p[0]);
      const T sy = nn::sigmoid(p[1]);
      const T dx = sx - tc[0], dy = sy - tc[1];
      const T dw = p[2] - tc[2], dh = p[3] - tc[3];
      loc_sum += static_cast<double>(dx * dx + dy * dy + dw * dw + dh * dh);
      if (dp) {
        const T scale = static_cast<T>(2.0 * cfg.lambda_loc / batch);
        dp[0] += scale * dx * sx * (T(1) - sx);
        dp[1] += scale * dy * sy * (T(1) - sy);
        dp[2] += scale * dw;
        dp[3] += scale * dh;
      }
    }
  }

  LossBreakdown out;
  out.conf = cfg.lambda_conf * conf_sum / batch;
  out.cls = cfg.lambda_cls * cls_sum / batch;
  out.loc = cfg.lambda_loc * loc_sum / batch;
  out.total = out.conf + out.cls + out.loc;
  return out;
}

std::vector<std::vector<Detection>> decode(const std::array<Tensor, 3>& grids,
                                           const AnchorSet& anchors, int input_size,
                                           double conf_threshold) {
  const int batch = grids[0].dim(0);
  std::vector<std::vector<Detection>> out(static_cast<size_t>(batch));

  for (int l = 0; l < 3; ++l) {
    const Tensor& g = grids[static_cast<size_t>(l)];
    const auto& level = anchors.levels[static_cast<size_t>(l)];
    const int slots = static_cast<int>(level.size());
    const int fields = g.dim(3) / slots;
    const int C = fields - 5;
    const int H = g.dim(1), W = g.dim(2);
    const double stride = static_cast<double>(input_size) / H;

    std::vector<float> probs(static_cast<size_t>(C));
    for (int n = 0; n < batch; ++n)
      for (int cy = 0; cy < H; ++cy)
        for (int cx = 0; cx < W; ++cx)
          for (int s = 0; s < slots; ++s) {
            const float* p = &g[(g.idx4(n, cy, cx, 0)) + static_cast<size_t>(s * fields)];
            const double conf = nn::sigmoid(static_cast<double>(p[4]));
            std::copy_n(p + 5, C, probs.data());
            nn::softmax_span(probs.data(), C);
            int arg = 0;
            for (int c = 1; c < C; ++c)
              if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(arg)]) arg = c;
            const double score = conf * probs[static_cast<size_t>(arg)];
            if (score < conf_threshold) continue;

            const auto& a = anchors.anchors[static_cast<size_t>(level[static_cast<size_t>(s)])];
            const double bx = (nn::sigmoid(static_cast<double>(p[0])) + cx) * stride;
            const double by = (nn::sigmoid(static_cast<double>(p[1])) + cy) * stride;
            const double bw = a.first * std::exp(static_cast<double>(p[2]));
            const double bh = a.second * std::exp(static_cast<double>(p[3]));
            Detection det;
            det.box = clip_box(Box::from_center(bx, by, bw, bh),
                               static_cast<double>(input_size), static_cast<double>(input_size));
            det.category = arg;
            det.confidence = score;
            out[static_cast<size_t>(n)].push_back(det);
          }
  }
  return out;
}

std::vector<Detection> predict(DetectorModel& model, const Raster& raster,
                               const AnchorSet& anchors, int input_size,
                               double conf_threshold, double nms_threshold) {
  require(input_size % 32 == 0, "predict: input size ", input_size,
          " is not divisible by 32");
  const auto lt = LetterboxTransform::fit(raster.width, raster.height, input_size);
  Sample boxed = letterbox_sample({raster, {}}, input_size);

  Tensor input({1, input_size, input_size, 3});
  const size_t n = input.size();
  for (size_t i = 0; i < n; ++i)
    input[i] = static_cast<float>(boxed.raster.data[i]) / 255.0f;

  auto grids = model.forward(input, nn::Phase::infer);
  auto decoded = decode(grids, anchors, input_size, conf_threshold);
  auto kept = nms(decoded[0], nms_threshold);
  for (auto& d : kept)
    d.box = clip_box(lt.invert(d.box), raster.width, raster.height);
  return kept;
}

void save_detections_jsonl(const std::string& path,
                           const std::vector<std::pair<std::string, std::vector<Detection>>>& dets,
                           const std::vector<std::string>& categories) {
  std::ofstream out(path);
  require(out.good(), "detections: cannot open ", path, " for writing");
  for (const auto& [image, list] : dets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : list)
      arr.push_back({{"category", categories.at(static_cast<size_t>(d.category))},
                     {"bbox", {d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax}},
                     {"score", d.confidence}});
    out << nlohmann::json{{"image", image}, {"detections", arr}}.dump() << "\n";
  }
  require(out.good(), "detections: write failure on ", path);
}

std::vector<std::pair<std::string, std::vector<Detection>>> load_detections_jsonl(
    const std::string& path, const std::vector<std::string>& categories) {
  std::ifstream in(path);
  require(in.good(), "detections: cannot open ", path);
  std::vector<std::pair<std::string, std::vector<Detection>>> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail("detections: parse failure at ", path, ":", lineno, ": ", e.what());
    }
    std::vector<Detection> list;
    for (const auto& dj : j.at("detections")) {
      Detection d;
      const std::string name = dj.at("category").get<std::string>();
      d.category = -1;
      for (size_t c = 0; c < categories.size(); ++c)
        if (categories[c] == name) d.category = static_cast<int>(c);
      require(d.category >= 0, "detections: unknown category \"", name, "\" at ", path,
              ":", lineno);
      const auto& bb = dj.at("bbox");
      d.box = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
               bb[3].get<double>()};
      d.confidence = dj.at("score").get<double>();
      list.push_back(d);
    }
    out.emplace_back(j.at("image").get<std::string>(), std::move(list));
  }
  return out;
}

template TargetSetT<float> build_targets<float>(const std::vector<std::vector<ObjectLabel>>&,
                                                const AnchorSet&, int,
                                                const std::array<GridShape, 3>&, double);
template TargetSetT<double> build_targets<double>(const std::vector<std::vector<ObjectLabel>>&,
                                                  const AnchorSet&, int,
                                                  const std::array<GridShape, 3>&, double);
template LossBreakdown total_loss<float>(const std::array<Tensor, 3>&,
                                         const TargetSetT<float>&, const HeadConfig&,
                                         std::array<Tensor, 3>*);
template LossBreakdown total_loss<double>(const std::array<Tensor64, 3>&,
                                          const TargetSetT<double>&, const HeadConfig&,
                                          std::array<Tensor64, 3>*);

}  // namespace sddkit
