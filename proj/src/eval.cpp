#include "sddkit/eval.hpp"

#include <algorithm>
#include <numeric>

#include "sddkit/common.hpp"

namespace sddkit {

namespace {

std::vector<int> confidence_order(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[static_cast<size_t>(a)].confidence > dets[static_cast<size_t>(b)].confidence;
  });
  return order;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<ObjectLabel>& gts, double iou_thr) {
  MatchResult res;
  res.order = confidence_order(dets);
  res.tp.assign(dets.size(), false);
  res.matched_gt.assign(dets.size(), -1);

  std::vector<bool> taken(gts.size(), false);
  for (size_t k = 0; k < res.order.size(); ++k) {
    const Detection& d = dets[static_cast<size_t>(res.order[k])];
    int best_gt = -1;
    double best_iou = 0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].category != d.category) continue;
      const double v = iou(d.box, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou >= iou_thr) {
      taken[static_cast<size_t>(best_gt)] = true;
      res.tp[k] = true;
      res.matched_gt[k] = best_gt;
    }
  }
  res.unmatched_gts = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return res;
}

double average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                         const Dataset& ds, int category, double iou_thr,
                         std::vector<PrPoint>* curve) {
  require(dets_per_image.size() == ds.records.size(),
          "average_precision: detections for ", dets_per_image.size(),
          " images but dataset has ", ds.records.size());

  size_t total_gts = 0;
  for (const auto& rec : ds.records)
    for (const auto& l : rec.labels)
      if (l.category == category) ++total_gts;
  require(total_gts > 0, "average_precision: no ground truths of category ", category);

  // per-image greedy matching, then a global confidence-ordered sweep
  struct Scored {
    double conf;
    int image;
    int index;
    bool tp;
  };
  std::vector<Scored> scored;
  for (size_t img = 0; img < dets_per_image.size(); ++img) {
    std::vector<Detection> dets;
    std::vector<int> det_idx;
    for (size_t i = 0; i < dets_per_image[img].size(); ++i) {
      if (dets_per_image[img][i].category != category) continue;
      dets.push_back(dets_per_image[img][i]);
      det_idx.push_back(static_cast<int>(i));
    }
    std::vector<ObjectLabel> gts;
    for (const auto& l : ds.records[img].labels)
      if (l.category == category) gts.push_back(l);

    const MatchResult m = match_detections(dets, gts, iou_thr);
    for (size_t k = 0; k < m.order.size(); ++k) {
      const size_t src = static_cast<size_t>(m.order[k]);
      scored.push_back({dets[src].confidence, static_cast<int>(img), det_idx[src], m.tp[k]});
    }
  }

  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  std::vector<PrPoint> points;
  points.reserve(scored.size());
  size_t tp = 0, fp = 0;
  for (const Scored& s : scored) {
    s.tp ? ++tp : ++fp;
    points.push_back({static_cast<double>(tp) / static_cast<double>(total_gts),
                      static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  if (curve) *curve = points;
  if (points.empty()) return 0.0;

  // monotone non-increasing precision envelope, exact area
  std::vector<double> env(points.size());
  double running = 0;
  for (size_t i = points.size(); i-- > 0;) {
    running = std::max(running, points[i].precision);
    env[i] = running;
  }
  double ap = 0, prev_recall = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    ap += (points[i].recall - prev_recall) * env[i];
    prev_recall = points[i].recall;
  }
  return ap;
}

APResult mean_ap(const std::vector<std::vector<Detection>>& dets_per_image,
                 const Dataset& ds, std::vector<double> thresholds) {
  require(ds.label_count() > 0, "mean_ap: dataset has no ground truths");
  const int C = static_cast<int>(ds.categories.size());

  std::vector<size_t> gts_per_cat(static_cast<size_t>(C), 0);
  for (const auto& rec : ds.records)
    for (const auto& l : rec.labels) ++gts_per_cat[static_cast<size_t>(l.category)];

  APResult res;
  res.thresholds = std::move(thresholds);
  for (double thr : res.thresholds) {
    std::vector<CategoryAP> cats(static_cast<size_t>(C));
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < C; ++c) {
      CategoryAP& cap = cats[static_cast<size_t>(c)];
      cap.gts = gts_per_cat[static_cast<size_t>(c)];
      for (const auto& img : dets_per_image)
        for (const auto& d : img)
          if (d.category == c) ++cap.dets;
      if (cap.gts == 0) continue;  // undefined; excluded from the mean
      cap.ap = average_precision(dets_per_image, ds, c, thr, &cap.curve);
      cap.defined = true;
      sum += cap.ap;
      ++defined;
    }
    require(defined > 0, "mean_ap: no category has ground truths");
    res.per_category.push_back(std::move(cats));
    res.map.push_back(sum / defined);
  }
  return res;
}

}  // namespace sddkit
