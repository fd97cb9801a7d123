#include "sddkit/dataset.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sddkit/common.hpp"
#include "sddkit/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace sddkit {

const std::vector<std::string> kDamageCategories = {"crack", "pop-out", "spalling",
                                                    "exposed rebar"};

size_t Dataset::label_count() const {
  size_t n = 0;
  for (const auto& r : records) n += r.labels.size();
  return n;
}

int Dataset::category_id(const std::string& name) const {
  for (size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == name) return static_cast<int>(i);
  return -1;
}

void Dataset::validate() const {
  for (const auto& r : records) {
    require(r.width > 0 && r.height > 0, "dataset: non-positive image size for ",
            r.image_path);
    for (const auto& l : r.labels) {
      require(l.category >= 0 && l.category < static_cast<int>(categories.size()),
              "dataset: label category ", l.category, " out of range for ",
              r.image_path);
      require(l.box.xmin <= l.box.xmax && l.box.ymin <= l.box.ymax,
              "dataset: inverted box in ", r.image_path);
    }
  }
}

Dataset Dataset::select_categories(const std::vector<int>& keep) const {
  Dataset out;
  out.categories.clear();
  std::vector<int> remap(categories.size(), -1);
  for (size_t i = 0; i < keep.size(); ++i) {
    const int id = keep[i];
    require(id >= 0 && id < static_cast<int>(categories.size()),
            "select_categories: id ", id, " out of range");
    remap[id] = static_cast<int>(i);
    out.categories.push_back(categories[id]);
  }
  for (const auto& r : records) {
    ImageRecord nr = r;
    nr.labels.clear();
    for (const auto& l : r.labels)
      if (remap[l.category] >= 0) nr.labels.push_back({remap[l.category], l.box});
    if (!nr.labels.empty()) out.records.push_back(std::move(nr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// statistics

void ScaleAspectHist::add(double rel_area, double aspect) {
  mass[static_cast<size_t>(scale_bin(rel_area)) * kBins + aspect_bin(aspect)] += 1.0;
  ++count;
}

double ScaleAspectHist::total() const {
  return std::accumulate(mass.begin(), mass.end(), 0.0);
}

void ScaleAspectHist::normalize() {
  const double t = total();
  if (t > 0)
    for (double& m : mass) m /= t;
}

namespace {
int log_bin(double v, double lo, double hi, int bins) {
  if (v <= lo) return 0;
  if (v >= hi) return bins - 1;
  const double f = (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo));
  return std::clamp(static_cast<int>(f * bins), 0, bins - 1);
}
}  // namespace

int ScaleAspectHist::scale_bin(double rel_area) {
  return log_bin(rel_area, kScaleLo, kScaleHi, kBins);
}

int ScaleAspectHist::aspect_bin(double aspect) {
  return log_bin(aspect, kAspectLo, kAspectHi, kBins);
}

namespace {
double quantile_midpoint(std::vector<double>& sorted, double q) {
  // midpoint-of-two rule for even counts at the median and the analogous
  // convention elsewhere
  const size_t n = sorted.size();
  const double pos = q * static_cast<double>(n) - 0.5;
  if (pos <= 0) return sorted.front();
  if (pos >= static_cast<double>(n - 1)) return sorted.back();
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1 - frac) + sorted[lo + 1] * frac;
}
}  // namespace

DatasetStats compute_stats(const Dataset& ds) {
  require(!ds.records.empty(), "stats: empty dataset");
  DatasetStats s;
  const size_t C = ds.categories.size();
  s.category_counts.assign(C, 0);
  s.category_fractions.assign(C, 0.0);
  s.per_category.assign(C, ScaleAspectHist{});

  std::vector<double> areas;
  for (const auto& r : ds.records) {
    const double img_area = static_cast<double>(r.width) * r.height;
    for (const auto& l : r.labels) {
      const double rel = l.box.area() / img_area;
      const double aspect = l.box.height() > 0 ? l.box.width() / l.box.height() : 16.0;
      areas.push_back(rel);
      ++s.category_counts[l.category];
      s.joint.add(rel, aspect);
      s.per_category[l.category].add(rel, aspect);
    }
  }
  s.total_labels = areas.size();
  require(s.total_labels > 0, "stats: dataset has no labels");

  for (size_t c = 0; c < C; ++c)
    s.category_fractions[c] =
        static_cast<double>(s.category_counts[c]) / static_cast<double>(s.total_labels);

  std::sort(areas.begin(), areas.end());
  s.area_q25 = quantile_midpoint(areas, 0.25);
  s.area_median = quantile_midpoint(areas, 0.5);
  s.area_q75 = quantile_midpoint(areas, 0.75);

  s.joint.normalize();
  for (auto& h : s.per_category) h.normalize();
  return s;
}

double hellinger(const ScaleAspectHist& a, const ScaleAspectHist& b) {
  double bc = 0;
  for (size_t i = 0; i < a.mass.size(); ++i) bc += std::sqrt(a.mass[i] * b.mass[i]);
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

std::vector<std::pair<int, double>> rank_source_classes(const DatasetStats& source,
                                                        const DatasetStats& target) {
  require(source.joint.mass.size() == target.joint.mass.size(),
          "rank_source_classes: histogram grids differ");
  std::vector<std::pair<int, double>> ranked;
  for (size_t c = 0; c < source.per_category.size(); ++c) {
    if (source.category_counts[c] == 0) continue;
    ranked.emplace_back(static_cast<int>(c), hellinger(source.per_category[c], target.joint));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  return ranked;
}

// ---------------------------------------------------------------------------
// splits

int dominant_category(const ImageRecord& rec) {
  if (rec.labels.empty()) return -1;
  std::vector<int> counts;
  for (const auto& l : rec.labels) {
    if (l.category >= static_cast<int>(counts.size())) counts.resize(l.category + 1, 0);
    ++counts[l.category];
  }
  int best = 0;
  for (size_t c = 1; c < counts.size(); ++c)
    if (counts[c] > counts[best]) best = static_cast<int>(c);
  return best;
}

namespace {
std::vector<int> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}
}  // namespace

HoldoutSplit partition_holdout(const Dataset& ds, double ratio, uint64_t seed) {
  require(ratio > 0 && ratio < 1, "holdout: ratio must be in (0,1), got ", ratio);
  const size_t n = ds.records.size();
  require(n >= 2, "holdout: need at least 2 records, got ", n);
  auto idx = shuffled_indices(n, seed);
  size_t n_train = static_cast<size_t>(std::lround(ratio * static_cast<double>(n)));
  n_train = std::clamp<size_t>(n_train, 1, n - 1);
  HoldoutSplit split;
  split.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  split.test.assign(idx.begin() + static_cast<long>(n_train), idx.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::vector<int>> partition_kfold(const Dataset& ds, int k, uint64_t seed) {
  require(k >= 2, "kfold: k must be >= 2, got ", k);
  const size_t n = ds.records.size();
  require(n >= static_cast<size_t>(k), "kfold: fewer images (", n, ") than folds (", k, ")");

  // strata keyed by dominant category, dealt round-robin into folds
  std::vector<std::vector<int>> strata(ds.categories.size() + 1);
  auto order = shuffled_indices(n, seed);
  for (int i : order) {
    const int dom = dominant_category(ds.records[static_cast<size_t>(i)]);
    strata[static_cast<size_t>(dom + 1)].push_back(i);
  }

  std::vector<std::vector<int>> folds(static_cast<size_t>(k));
  size_t next = 0;
  for (const auto& stratum : strata)
    for (int i : stratum) {
      folds[next % static_cast<size_t>(k)].push_back(i);
      ++next;
    }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Dataset subset(const Dataset& ds, const std::vector<int>& indices) {
  Dataset out;
  out.categories = ds.categories;
  out.records.reserve(indices.size());
  for (int i : indices) out.records.push_back(ds.records[static_cast<size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// codecs

namespace {

Box clamp_to_image(const Box& b, int w, int h, const std::string& context, bool* warned) {
  Box c = clip_box(b, w, h);
  if (c != b && !*warned) {
    log_warn(detail::cat("clamped out-of-bounds box in ", context));
    *warned = true;
  }
  return c;
}

}  // namespace

Dataset load_jsonl(const std::string& path, std::optional<std::vector<std::string>> categories) {
  std::ifstream in(path);
  require(in.good(), "jsonl: cannot open ", path);
  Dataset ds;
  // with no explicit table, the table is inferred from the file in
  // first-appearance order; with one, unknown names are an error
  const bool infer = !categories.has_value();
  if (infer)
    ds.categories.clear();
  else
    ds.categories = *categories;

  std::string line;
  size_t lineno = 0;
  bool warned = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("jsonl: parse failure at ", path, ":", lineno, ": ", e.what());
    }
    try {
      ImageRecord rec;
      rec.image_path = j.at("image").get<std::string>();
      rec.width = j.at("width").get<int>();
      rec.height = j.at("height").get<int>();
      require(rec.width > 0 && rec.height > 0, "non-positive image size");
      for (const auto& o : j.at("objects")) {
        const std::string name = o.at("category").get<std::string>();
        int cat = ds.category_id(name);
        if (cat < 0 && infer) {
          cat = static_cast<int>(ds.categories.size());
          ds.categories.push_back(name);
        }
        if (cat < 0) {
          std::string known;
          for (const auto& c : ds.categories) known += (known.empty() ? "" : ", ") + c;
          fail("unknown category \"", name, "\" (known: ", known, ")");
        }
        const auto& bb = o.at("bbox");
        require(bb.is_array() && bb.size() == 4, "bbox must be [xmin,ymin,xmax,ymax]");
        Box b{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
              bb[3].get<double>()};
        require(b.xmin <= b.xmax && b.ymin <= b.ymax, "inverted bbox");
        rec.labels.push_back(
            {cat, clamp_to_image(b, rec.width, rec.height, path, &warned)});
      }
      ds.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      fail("jsonl: bad record at ", path, ":", lineno, ": ", e.what());
    } catch (const Error& e) {
      fail("jsonl: bad record at ", path, ":", lineno, ": ", e.what());
    }
  }
  return ds;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "jsonl: cannot open ", path, " for writing");
  for (const auto& r : ds.records) {
    json objects = json::array();
    for (const auto& l : r.labels) {
      objects.push_back({{"category", ds.categories[static_cast<size_t>(l.category)]},
                         {"bbox", {l.box.xmin, l.box.ymin, l.box.xmax, l.box.ymax}}});
    }
    json j = {{"image", r.image_path},
              {"width", r.width},
              {"height", r.height},
              {"objects", objects}};
    out << j.dump() << "\n";
  }
  require(out.good(), "jsonl: write failure on ", path);
}

namespace {

const boost::property_tree::ptree& xml_child(const boost::property_tree::ptree& pt,
                                             const std::string& key,
                                             const std::string& path) {
  auto child = pt.get_child_optional(key);
  require(child.has_value(), "voc-xml: missing <", key, "> in ", path);
  return *child;
}

}  // namespace

ImageRecord load_voc_xml(const std::string& path, const std::vector<std::string>& categories) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_xml(path, pt);
  } catch (const boost::property_tree::xml_parser_error& e) {
    fail("voc-xml: parse failure at ", path, ":", e.line(), ": ", e.message());
  }

  const auto& ann = xml_child(pt, "annotation", path);
  const auto& size = xml_child(ann, "size", path);
  ImageRecord rec;
  rec.width = size.get<int>("width", 0);
  rec.height = size.get<int>("height", 0);
  require(rec.width > 0 && rec.height > 0, "voc-xml: bad <size> in ", path);
  rec.image_path = ann.get<std::string>("filename", fs::path(path).stem().string() + ".png");

  bool warned = false;
  for (const auto& [key, node] : ann) {
    if (key != "object") continue;
    const std::string name = node.get<std::string>("name", "");
    int cat = -1;
    for (size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == name) cat = static_cast<int>(i);
    if (cat < 0) {
      std::string known;
      for (const auto& c : categories) known += (known.empty() ? "" : ", ") + c;
      fail("voc-xml: unknown category \"", name, "\" in ", path, " (known: ", known, ")");
    }
    const auto& bnd = xml_child(node, "bndbox", path);
    Box b;
    b.xmin = bnd.get<double>("xmin", -1);
    b.ymin = bnd.get<double>("ymin", -1);
    b.xmax = bnd.get<double>("xmax", -1);
    b.ymax = bnd.get<double>("ymax", -1);
    require(b.xmin >= 0 && b.ymin >= 0 && b.xmax >= b.xmin && b.ymax >= b.ymin,
            "voc-xml: bad <bndbox> in ", path);
    rec.labels.push_back({cat, clamp_to_image(b, rec.width, rec.height, path, &warned)});
  }
  return rec;
}

Dataset load_voc_dir(const std::string& dir, std::vector<std::string> categories) {
  require(fs::is_directory(dir), "voc-xml: not a directory: ", dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".xml") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "voc-xml: no .xml files under ", dir);

  Dataset ds;
  ds.categories = std::move(categories);
  for (const auto& f : files) ds.records.push_back(load_voc_xml(f, ds.categories));
  return ds;
}

Raster load_raster(const ImageRecord& rec, const std::string& base_dir) {
  if (rec.raster) return *rec.raster;
  fs::path p(rec.image_path);
  if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
  return read_png(p.string());
}

}  // namespace sddkit
