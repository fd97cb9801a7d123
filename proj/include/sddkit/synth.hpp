#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sddkit/dataset.hpp"

namespace sddkit {

// Drawing primitives for synthetic damage-like objects.
enum class Archetype {
  polyline,  // thin high-aspect jagged line (crack-like)
  blob,      // small round filled ellipse (pop-out-like)
  patch,     // irregular ragged polygon (spalling-like)
  stripes,   // striped rectangular patch (exposed-rebar-like)
};

struct CategoryShape {
  Archetype archetype = Archetype::blob;
  double area_lo = 0.01, area_hi = 0.05;      // relative area, log-uniform
  double elong_lo = 1.0, elong_hi = 1.0;      // max(w,h)/min(w,h), log-uniform
  bool axis_aligned_elong = true;             // pick horizontal/vertical at random
  uint8_t tint[3] = {80, 80, 80};
};

struct SynthConfig {
  int count = 100;
  int image_size = 128;
  std::vector<std::string> categories;
  std::vector<double> mix;            // per-category object fraction; sums to 1
  std::vector<CategoryShape> shapes;  // per category
  int min_objects = 1, max_objects = 3;
  double bg_level = 180, bg_noise = 10;
  uint64_t seed = 0;
};

// Damage-like mix (crack, pop-out, spalling, exposed rebar at 35/15/13/37%).
SynthConfig synth_target_preset(int count, int image_size, uint64_t seed);

// Eight categories over a broader scale/aspect range, for transfer-source
// selection experiments.
SynthConfig synth_source_preset(int count, int image_size, uint64_t seed);

SynthConfig synth_preset(const std::string& name, int count, int image_size, uint64_t seed);

// Deterministic per seed; rasters are generated inline and image paths point
// at "images/img_NNNNN.png" relative to a dataset root.
Dataset generate(const SynthConfig& cfg);

// Write rasters plus a data.jsonl next to them under out_dir.
void write_synth_dataset(const Dataset& ds, const std::string& out_dir);

}  // namespace sddkit
