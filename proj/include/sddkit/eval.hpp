#pragma once

#include <map>
#include <vector>

#include "sddkit/dataset.hpp"

namespace sddkit {

struct MatchResult {
  // per detection, in the evaluated confidence order
  std::vector<int> order;       // indices into the input detections
  std::vector<bool> tp;         // true positive flag
  std::vector<int> matched_gt;  // ground-truth index or -1
  int unmatched_gts = 0;        // false negatives
};

// Greedy matching per image: detections in confidence-descending order each
// claim the unmatched same-category ground truth of highest IoU when that
// IoU >= iou_thr; duplicates and category mismatches are false positives.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<ObjectLabel>& gts, double iou_thr);

struct PrPoint {
  double recall = 0, precision = 0;
};

struct CategoryAP {
  double ap = 0;
  size_t gts = 0;
  size_t dets = 0;
  std::vector<PrPoint> curve;
  bool defined = false;  // false when the category has no ground truths
};

struct APResult {
  // thresholds[i] pairs with per_category[i] / map[i]
  std::vector<double> thresholds;
  std::vector<std::vector<CategoryAP>> per_category;
  std::vector<double> map;
};

// Exact area under the monotone precision envelope (all-point interpolation),
// accumulated in global confidence order with (confidence desc, image id,
// detection index) tie-breaks.
double average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                         const Dataset& ds, int category, double iou_thr,
                         std::vector<PrPoint>* curve = nullptr);

APResult mean_ap(const std::vector<std::vector<Detection>>& dets_per_image,
                 const Dataset& ds, std::vector<double> thresholds = {0.5, 0.75});

}  // namespace sddkit
