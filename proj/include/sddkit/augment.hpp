#pragma once

#include <cstdint>
#include <vector>

#include "sddkit/dataset.hpp"
#include "sddkit/raster.hpp"
#include "sddkit/rng.hpp"

namespace sddkit {

// A raster plus its box labels, moving together through the pipeline.
struct Sample {
  Raster raster;
  std::vector<ObjectLabel> labels;
};

struct AugmentConfig {
  double p_geom = 0.5;
  double p_flip = 1.0 / 3.0;
  double p_photo = 0.25;
  double crop_scale_min = 0.6, crop_scale_max = 1.0;
  int blur_len_min = 3, blur_len_max = 15;
  double blur_angle_min = 0.0, blur_angle_max = 180.0;  // degrees, half-open
  double brightness_min = -0.3, brightness_max = 0.3;   // fraction of lightness
  double sp_density_min = 0.005, sp_density_max = 0.03;
  int target_size = 416;
  uint8_t pad_value = 128;
};

enum class FlipAxis { horizontal, vertical };

// Which branches the pipeline's draws selected (before any crop fallback).
struct PipelineTrace {
  bool geom = false;
  bool geom_fallback = false;
  bool flip = false;
  FlipAxis flip_axis = FlipAxis::horizontal;
  bool photo = false;
  int photo_op = -1;  // 0 blur, 1 brightness, 2 salt-pepper
};

// Crop to a window of `scale` times the image dimensions at `origin`.
// Returns false (sample untouched) when a label box falls outside.
bool scale_crop(Sample& s, double scale, int origin_x, int origin_y);

void flip(Sample& s, FlipAxis axis);

Raster motion_blur(const Raster& img, int length, double angle_deg,
                   kernels::Exec exec = kernels::default_exec());

// The length-normalized line kernel behind motion_blur, as (dx, dy, weight);
// weights sum to exactly 1.
std::vector<std::tuple<int, int, double>> motion_blur_kernel(int length, double angle_deg);

Raster brightness_hls(const Raster& img, double delta,
                      kernels::Exec exec = kernels::default_exec());

Raster salt_pepper(const Raster& img, double density, uint64_t seed);

// Letterbox a sample into a target x target frame (gray padding).
Sample letterbox_sample(const Sample& s, int target, uint8_t pad_value = 128);

// Ordered branches: scale/crop, one flip, one photometric op, letterbox.
Sample augment_pipeline(const Sample& s, const AugmentConfig& cfg, Rng& rng,
                        PipelineTrace* trace = nullptr);

// HLS <-> RGB on unit-range values; exposed for tests.
void rgb_to_hls(double r, double g, double b, double& h, double& l, double& s);
void hls_to_rgb(double h, double l, double s, double& r, double& g, double& b);

}  // namespace sddkit
