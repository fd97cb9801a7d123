#include "sddkit/geometry.hpp"

#include <cmath>
#include <cstdio>

#include "sddkit/common.hpp"

namespace sddkit {

namespace {
bool quiet_logging = false;
}

void set_quiet_logging(bool quiet) { quiet_logging = quiet; }

void log_warn(const std::string& msg) {
  if (!quiet_logging) std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

void log_info(const std::string& msg) {
  if (!quiet_logging) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double wh_iou(double aw, double ah, double bw, double bh) {
  const double inter = std::min(aw, bw) * std::min(ah, bh);
  const double uni = aw * ah + bw * bh - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  auto before = [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.category != b.category) return a.category < b.category;
    if (a.box.xmin != b.box.xmin) return a.box.xmin < b.box.xmin;
    return a.box.ymin < b.box.ymin;
  };
  std::sort(dets.begin(), dets.end(), before);

  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.category == d.category && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

LetterboxTransform LetterboxTransform::fit(int source_w, int source_h, int target) {
  require(source_w > 0 && source_h > 0 && target > 0,
          "letterbox: dimensions must be positive, got ", source_w, "x", source_h,
          " -> ", target);
  LetterboxTransform t;
  t.source_w = source_w;
  t.source_h = source_h;
  t.target = target;
  t.scale = static_cast<double>(target) / std::max(source_w, source_h);
  t.scaled_w = static_cast<int>(std::lround(source_w * t.scale));
  t.scaled_h = static_cast<int>(std::lround(source_h * t.scale));
  t.pad_x = std::floor((target - t.scaled_w) / 2.0);
  t.pad_y = std::floor((target - t.scaled_h) / 2.0);
  return t;
}

}  // namespace sddkit
