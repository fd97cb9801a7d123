#include "sddkit/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sddkit/common.hpp"
#include "sddkit/rng.hpp"

namespace sddkit {

namespace {

double wh_dist(const WH& a, const WH& b) {
  return 1.0 - wh_iou(a.first, a.second, b.first, b.second);
}

int nearest_centroid(const WH& p, const std::vector<WH>& centroids) {
  int best = 0;
  double best_d = wh_dist(p, centroids[0]);
  for (size_t c = 1; c < centroids.size(); ++c) {
    const double d = wh_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

double kmeans_objective(const std::vector<WH>& points, const std::vector<WH>& centroids) {
  double obj = 0;
  for (const WH& p : points) obj += wh_dist(p, centroids[static_cast<size_t>(nearest_centroid(p, centroids))]);
  return obj;
}

namespace {

KmeansResult kmeans_wh_single(const std::vector<WH>& points, int k, uint64_t seed,
                              int max_iter) {
  const size_t n = points.size();
  Rng rng(seed);

  // farthest-point-style seeding: a random first pick, then subsequent picks
  // drawn with probability proportional to squared distance from the chosen
  // set, so restart seeds explore distinct initializations
  std::vector<WH> centroids;
  centroids.push_back(points[static_cast<size_t>(rng.uniform_int(static_cast<int>(n)))]);
  std::vector<double> min_d(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
      min_d[i] = wh_dist(points[i], centroids[static_cast<size_t>(nearest_centroid(points[i], centroids))]);
      total += min_d[i] * min_d[i];
    }
    size_t pick = 0;
    if (total <= 0) {
      pick = static_cast<size_t>(rng.uniform_int(static_cast<int>(n)));
    } else {
      double u = rng.uniform() * total;
      for (size_t i = 0; i < n; ++i) {
        u -= min_d[i] * min_d[i];
        if (u <= 0 || i + 1 == n) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }

  KmeansResult res;
  res.assignment.assign(n, -1);
  bool has_prev = false;

  auto assigned_objective = [&](const std::vector<int>& assign) {
    double obj = 0;
    for (size_t i = 0; i < n; ++i)
      obj += wh_dist(points[i], centroids[static_cast<size_t>(assign[i])]);
    return obj;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    // assignment step; the trace pairs the old and new assignment against
    // the same centroids
    const double pre = has_prev ? assigned_objective(res.assignment) : 0.0;
    std::vector<int> assign(n);
    for (size_t i = 0; i < n; ++i) assign[i] = nearest_centroid(points[i], centroids);
    if (has_prev) res.assign_step_trace.emplace_back(pre, assigned_objective(assign));

    // empty-cluster repair: reseed from the worst-covered point
    for (int c = 0; c < k; ++c) {
      if (std::find(assign.begin(), assign.end(), c) != assign.end()) continue;
      size_t worst = 0;
      double worst_d = -1;
      for (size_t i = 0; i < n; ++i) {
        const double d = wh_dist(points[i], centroids[static_cast<size_t>(assign[i])]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      centroids[static_cast<size_t>(c)] = points[worst];
      assign[worst] = c;
    }

    res.iterations = iter + 1;
    if (assign == res.assignment) break;
    res.assignment = assign;
    has_prev = true;

    // mean update
    std::vector<double> sw(static_cast<size_t>(k), 0), sh(static_cast<size_t>(k), 0);
    std::vector<int> cnt(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < n; ++i) {
      sw[static_cast<size_t>(assign[i])] += points[i].first;
      sh[static_cast<size_t>(assign[i])] += points[i].second;
      ++cnt[static_cast<size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[static_cast<size_t>(c)] > 0)
        centroids[static_cast<size_t>(c)] = {sw[static_cast<size_t>(c)] / cnt[static_cast<size_t>(c)],
                                             sh[static_cast<size_t>(c)] / cnt[static_cast<size_t>(c)]};
  }

  res.centroids = centroids;
  res.objective = kmeans_objective(points, centroids);
  return res;
}

}  // namespace

KmeansResult kmeans_wh(const std::vector<WH>& points, int k, uint64_t seed, int max_iter) {
  require(k >= 1, "kmeans: k must be >= 1, got ", k);
  require(static_cast<int>(points.size()) >= k, "kmeans: ", points.size(),
          " samples for k = ", k);
  std::set<WH> distinct(points.begin(), points.end());
  require(static_cast<int>(distinct.size()) >= k, "kmeans: only ", distinct.size(),
          " distinct samples for k = ", k);

  // several independent initializations per call; the best converged state
  // wins (the usual guard against poor local optima in Lloyd-style loops)
  constexpr int kInits = 8;
  KmeansResult best;
  for (int init = 0; init < kInits; ++init) {
    KmeansResult run = kmeans_wh_single(points, k, derive_seed(seed, static_cast<uint64_t>(init)),
                                        max_iter);
    if (init == 0 || run.objective < best.objective) best = std::move(run);
  }
  return best;
}

std::vector<WH> pooled_label_dimensions(const Dataset& ds, const std::vector<int>& sizes) {
  require(!sizes.empty(), "anchors: size set must be nonempty");
  std::vector<WH> pooled;
  for (const auto& rec : ds.records) {
    for (int size : sizes) {
      const double scale = static_cast<double>(size) / std::max(rec.width, rec.height);
      for (const auto& l : rec.labels)
        pooled.emplace_back(l.box.width() * scale, l.box.height() * scale);
    }
  }
  return pooled;
}

std::vector<std::vector<int>> assign_scales(const std::vector<WH>& anchors) {
  const int k = static_cast<int>(anchors.size());
  require(k % 3 == 0, "anchors: k must be divisible by 3, got ", k);
  std::vector<int> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& wa = anchors[static_cast<size_t>(a)];
    const auto& wb = anchors[static_cast<size_t>(b)];
    const double area_a = wa.first * wa.second, area_b = wb.first * wb.second;
    if (area_a != area_b) return area_a < area_b;
    if (wa != wb) return wa < wb;
    return a < b;
  });
  std::vector<std::vector<int>> levels(3);
  const int per = k / 3;
  for (int i = 0; i < k; ++i) levels[static_cast<size_t>(i / per)].push_back(order[static_cast<size_t>(i)]);
  return levels;
}

AnchorSet kmeans_anchors(const Dataset& ds, int k, const std::vector<int>& sizes,
                         uint64_t seed, int max_iter) {
  require(k % 3 == 0, "anchors: k must be divisible by 3, got ", k);
  auto pooled = pooled_label_dimensions(ds, sizes);
  require(static_cast<int>(pooled.size()) >= k, "anchors: dataset has ", pooled.size(),
          " boxes, need at least ", k);

  auto res = kmeans_wh(pooled, k, seed, max_iter);

  // store sorted by area so levels are contiguous index triples
  std::sort(res.centroids.begin(), res.centroids.end(), [](const WH& a, const WH& b) {
    const double aa = a.first * a.second, ab = b.first * b.second;
    if (aa != ab) return aa < ab;
    return a < b;
  });
  AnchorSet set;
  set.anchors = res.centroids;
  set.levels = assign_scales(set.anchors);
  return set;
}

AnchorQuality anchor_quality(const AnchorSet& set, const Dataset& ds, int size) {
  require(!set.anchors.empty(), "anchor_quality: empty anchor set");
  AnchorQuality q;
  size_t n = 0;
  for (const auto& rec : ds.records) {
    const double scale = static_cast<double>(size) / std::max(rec.width, rec.height);
    for (const auto& l : rec.labels) {
      const double w = l.box.width() * scale, h = l.box.height() * scale;
      double best = 0;
      for (const auto& a : set.anchors) best = std::max(best, wh_iou(w, h, a.first, a.second));
      q.avg_best_iou += best;
      if (best >= 0.5) q.recall_at_05 += 1;
      ++n;
    }
  }
  require(n > 0, "anchor_quality: dataset has no labels");
  q.avg_best_iou /= static_cast<double>(n);
  q.recall_at_05 /= static_cast<double>(n);
  return q;
}

}  // namespace sddkit
