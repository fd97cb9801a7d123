#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sddkit/geometry.hpp"
#include "sddkit/raster.hpp"

namespace sddkit {

struct ObjectLabel {
  int category = 0;
  Box box;
  bool operator==(const ObjectLabel&) const = default;
};

struct ImageRecord {
  std::string image_path;  // relative to the dataset file unless absolute
  int width = 0, height = 0;
  std::vector<ObjectLabel> labels;
  // Optional in-memory pixels; generators fill this so training never has to
  // round-trip through disk.
  std::shared_ptr<const Raster> raster;
};

inline bool same_annotations(const ImageRecord& a, const ImageRecord& b) {
  return a.image_path == b.image_path && a.width == b.width && a.height == b.height &&
         a.labels == b.labels;
}

extern const std::vector<std::string> kDamageCategories;  // crack, pop-out, spalling, exposed rebar

struct Dataset {
  std::vector<ImageRecord> records;
  std::vector<std::string> categories = kDamageCategories;

  size_t label_count() const;
  int category_id(const std::string& name) const;  // -1 if unknown
  void validate() const;

  // New dataset containing only labels of `keep` (ids remapped to 0..k-1 in
  // the given order); records left with no labels are dropped.
  Dataset select_categories(const std::vector<int>& keep) const;
};

// 16x16 joint histogram over (log relative scale, log aspect ratio).
// Relative scale is object area / image area, log-spaced in [1e-4, 1];
// aspect is w/h, log-spaced in [1/16, 16]. Out-of-range values land in the
// edge bins.
struct ScaleAspectHist {
  static constexpr int kBins = 16;
  static constexpr double kScaleLo = 1e-4, kScaleHi = 1.0;
  static constexpr double kAspectLo = 1.0 / 16.0, kAspectHi = 16.0;

  std::array<double, kBins * kBins> mass{};  // normalized; sums to 1 when count > 0
  size_t count = 0;

  void add(double rel_area, double aspect);
  void normalize();
  double total() const;

  static int scale_bin(double rel_area);
  static int aspect_bin(double aspect);
};

struct DatasetStats {
  size_t total_labels = 0;
  std::vector<size_t> category_counts;
  std::vector<double> category_fractions;
  double area_q25 = 0, area_median = 0, area_q75 = 0;  // relative areas
  ScaleAspectHist joint;
  std::vector<ScaleAspectHist> per_category;
};

DatasetStats compute_stats(const Dataset& ds);

// Hellinger distance between two normalized joint histograms, in [0, 1].
double hellinger(const ScaleAspectHist& a, const ScaleAspectHist& b);

// Source categories ranked by ascending Hellinger distance from the target
// dataset's overall (scale, aspect) distribution. Ties break by category id.
std::vector<std::pair<int, double>> rank_source_classes(const DatasetStats& source,
                                                        const DatasetStats& target);

struct HoldoutSplit {
  std::vector<int> train, test;  // record indices
};

HoldoutSplit partition_holdout(const Dataset& ds, double ratio, uint64_t seed);

// Stratified by each image's dominant category; every fold gets a near-equal
// share of each stratum.
std::vector<std::vector<int>> partition_kfold(const Dataset& ds, int k, uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<int>& indices);

int dominant_category(const ImageRecord& rec);

// JSONL codec. One JSON object per line:
//   {"image": str, "width": int, "height": int,
//    "objects": [{"category": str, "bbox": [xmin, ymin, xmax, ymax]}]}
// Category names are resolved against `categories`.
Dataset load_jsonl(const std::string& path,
                   std::optional<std::vector<std::string>> categories = std::nullopt);
void save_jsonl(const Dataset& ds, const std::string& path);

// LabelImg-style VOC XML (one file per image: <size>, <object><name>,
// <bndbox> with integer corners).
ImageRecord load_voc_xml(const std::string& path, const std::vector<std::string>& categories);
Dataset load_voc_dir(const std::string& dir, std::vector<std::string> categories);

// Resolve a record's pixels: inline raster if present, else read the PNG.
Raster load_raster(const ImageRecord& rec, const std::string& base_dir = "");

}  // namespace sddkit
