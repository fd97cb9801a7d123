#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sddkit/dataset.hpp"

namespace sddkit {

using WH = std::pair<double, double>;

// Nine (w, h) priors sorted by area ascending and split into area thirds:
// levels[0] feeds the stride-8 grid, levels[1] stride 16, levels[2] stride 32.
struct AnchorSet {
  std::vector<WH> anchors;
  std::vector<std::vector<int>> levels;
};

struct KmeansResult {
  std::vector<WH> centroids;
  std::vector<int> assignment;
  double objective = 0;  // sum of (1 - best wh_iou)
  int iterations = 0;
  // Objective before/after each reassignment, measured against the same
  // centroids; the "after" side never exceeds the "before" side. (the mean
  // update itself carries no such guarantee under an IoU distance)
  std::vector<std::pair<double, double>> assign_step_trace;
};

// Core clustering on (w, h) samples with distance 1 - wh_iou, seeded
// farthest-point initialization, arithmetic-mean updates. Stops when the
// assignment stabilizes or at max_iter.
KmeansResult kmeans_wh(const std::vector<WH>& points, int k, uint64_t seed,
                       int max_iter = 100);

double kmeans_objective(const std::vector<WH>& points, const std::vector<WH>& centroids);

// Pools every ground-truth (w, h) letterbox-scaled to each size in `sizes`,
// clusters, and partitions the result across pyramid levels.
AnchorSet kmeans_anchors(const Dataset& ds, int k, const std::vector<int>& sizes,
                         uint64_t seed, int max_iter = 100);

// Area-ascending thirds of a sorted anchor list; ties broken by (w, h, index).
std::vector<std::vector<int>> assign_scales(const std::vector<WH>& anchors);

struct AnchorQuality {
  double avg_best_iou = 0;
  double recall_at_05 = 0;
};

// Best wh_iou per ground truth letterbox-scaled to `size`.
AnchorQuality anchor_quality(const AnchorSet& set, const Dataset& ds, int size);

std::vector<WH> pooled_label_dimensions(const Dataset& ds, const std::vector<int>& sizes);

}  // namespace sddkit
