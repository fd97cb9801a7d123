#pragma once

#include <algorithm>
#include <vector>

namespace sddkit {

// Axis-aligned rectangle in image coordinates, origin at the top-left,
// stored corner-form. Continuous pixel units.
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool empty() const { return width() <= 0 || height() <= 0; }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const Box&) const = default;
};

struct Detection {
  Box box;
  int category = 0;
  double confidence = 0;
};

// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

// IoU of two rectangles anchored at a shared corner: min-overlap area over
// union. The clustering metric for anchor dimensions.
double wh_iou(double aw, double ah, double bw, double bh);

// Greedy per-category suppression. Output sorted by confidence descending;
// ties broken by (confidence, category, xmin, ymin).
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

// Aspect-preserving scale into a target x target frame with symmetric
// padding (floor on top/left, remainder bottom/right).
struct LetterboxTransform {
  double scale = 1;
  double pad_x = 0, pad_y = 0;
  int source_w = 0, source_h = 0, target = 0;
  int scaled_w = 0, scaled_h = 0;

  static LetterboxTransform fit(int source_w, int source_h, int target);

  Box apply(const Box& b) const {
    return {b.xmin * scale + pad_x, b.ymin * scale + pad_y,
            b.xmax * scale + pad_x, b.ymax * scale + pad_y};
  }
  Box invert(const Box& b) const {
    return {(b.xmin - pad_x) / scale, (b.ymin - pad_y) / scale,
            (b.xmax - pad_x) / scale, (b.ymax - pad_y) / scale};
  }
};

inline Box clip_box(const Box& b, double w, double h) {
  return {std::clamp(b.xmin, 0.0, w), std::clamp(b.ymin, 0.0, h),
          std::clamp(b.xmax, 0.0, w), std::clamp(b.ymax, 0.0, h)};
}

}  // namespace sddkit
