#pragma once

#include <array>

#include "sddkit/anchors.hpp"
#include "sddkit/model.hpp"

namespace sddkit {

// Grid tensors are [N, H, W, 3*(5+C)] with per-slot layout
// (tx, ty, tw, th, to, p_0..p_{C-1}); level l in {0,1,2} runs at stride
// {8,16,32} and uses the anchor triple anchors.levels[l].

struct HeadConfig {
  double ignore_threshold = 0.5;
  double gamma = 2.0;
  double lambda_conf = 1.0, lambda_cls = 1.0, lambda_loc = 1.0;
};

template <typename T>
struct LevelTargetsT {
  int h = 0, w = 0;
  double stride = 0;
  TensorT<T> obj;     // [N,H,W,3], 1 at positives
  TensorT<T> ignore;  // [N,H,W,3], 1 where the confidence loss is masked out
  TensorT<T> coord;   // [N,H,W,3,4], (off_x, off_y, ln(gw/pw), ln(gh/ph))
  std::vector<int> cls;  // flat [N*H*W*3], category at positives, else -1
};

template <typename T>
struct TargetSetT {
  std::array<LevelTargetsT<T>, 3> levels;
  int positives = 0;
  int collisions = 0;  // ground truths demoted by a later claim on their slot
};

using TargetSet = TargetSetT<float>;

struct GridShape {
  int h = 0, w = 0;
};

inline std::array<GridShape, 3> grid_shapes_for(int input_size) {
  auto cdiv = [](int a, int b) { return (a + b - 1) / b; };
  return {GridShape{cdiv(input_size, 8), cdiv(input_size, 8)},
          GridShape{cdiv(input_size, 16), cdiv(input_size, 16)},
          GridShape{cdiv(input_size, 32), cdiv(input_size, 32)}};
}

// One positive per ground truth at its best-IoU anchor; priors overlapping
// any ground truth above ignore_threshold are exempt from the negative
// confidence penalty. A later ground truth claiming an occupied slot wins;
// the earlier one is demoted to ignore and counted.
template <typename T>
TargetSetT<T> build_targets(const std::vector<std::vector<ObjectLabel>>& labels,
                            const AnchorSet& anchors, int input_size,
                            const std::array<GridShape, 3>& grids,
                            double ignore_threshold = 0.5);

struct LossBreakdown {
  double conf = 0, cls = 0, loc = 0, total = 0;
};

// Lambda-weighted terms, each normalized by batch size; when dgrids is given
// it receives d(total)/d(grid).
template <typename T>
LossBreakdown total_loss(const std::array<TensorT<T>, 3>& grids,
                         const TargetSetT<T>& targets, const HeadConfig& cfg,
                         std::array<TensorT<T>, 3>* dgrids = nullptr);

// Box decoding on all three levels; detections below conf_threshold are
// dropped. Anchors are taken as pixels in the current input frame.
std::vector<std::vector<Detection>> decode(const std::array<Tensor, 3>& grids,
                                           const AnchorSet& anchors, int input_size,
                                           double conf_threshold);

// letterbox -> forward -> decode -> per-category NMS -> source coordinates
std::vector<Detection> predict(DetectorModel& model, const Raster& raster,
                               const AnchorSet& anchors, int input_size,
                               double conf_threshold, double nms_threshold);

// Detections interchange format, one JSON object per line:
//   {"image": str, "detections": [{"category": str, "bbox": [...], "score": f}]}
void save_detections_jsonl(const std::string& path,
                           const std::vector<std::pair<std::string, std::vector<Detection>>>& dets,
                           const std::vector<std::string>& categories);
std::vector<std::pair<std::string, std::vector<Detection>>> load_detections_jsonl(
    const std::string& path, const std::vector<std::string>& categories);

}  // namespace sddkit
