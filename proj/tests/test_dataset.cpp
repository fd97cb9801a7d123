#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sddkit/dataset.hpp"
#include "sddkit/rng.hpp"

using namespace sddkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "sddkit_test_dataset";
  fs::create_directories(p);
  return p;
}

Dataset small_dataset() {
  Dataset ds;
  ImageRecord a;
  a.image_path = "a.png";
  a.width = 100;
  a.height = 80;
  a.labels = {{0, {10, 20, 30, 40}}, {3, {5, 5, 60, 70}}};
  ImageRecord b;
  b.image_path = "b.png";
  b.width = 64;
  b.height = 64;
  ds.records = {a, b};
  return ds;
}

}  // namespace

TEST_CASE("jsonl round trip is lossless") {
  const auto path = (temp_dir() / "roundtrip.jsonl").string();
  Dataset ds = small_dataset();
  save_jsonl(ds, path);
  Dataset back = load_jsonl(path, ds.categories);
  REQUIRE(back.records.size() == ds.records.size());
  CHECK(back.categories == ds.categories);
  for (size_t i = 0; i < ds.records.size(); ++i)
    CHECK(same_annotations(back.records[i], ds.records[i]));
}

TEST_CASE("jsonl category inference follows first appearance") {
  const auto path = (temp_dir() / "infer.jsonl").string();
  std::ofstream(path) << R"({"image":"x.png","width":10,"height":10,"objects":[)"
                      << R"({"category":"beta","bbox":[0,0,2,2]},)"
                      << R"({"category":"alpha","bbox":[1,1,3,3]}]})" << "\n";
  Dataset ds = load_jsonl(path);
  CHECK(ds.categories == std::vector<std::string>{"beta", "alpha"});
}

TEST_CASE("jsonl unknown category names the known table") {
  const auto path = (temp_dir() / "unknown.jsonl").string();
  std::ofstream(path) << R"({"image":"x.png","width":10,"height":10,"objects":[)"
                      << R"({"category":"rust","bbox":[0,0,2,2]}]})" << "\n";
  CHECK_THROWS_WITH_AS(load_jsonl(path, kDamageCategories),
                       doctest::Contains("crack"), Error);
}

TEST_CASE("jsonl parse failure reports file and line") {
  const auto path = (temp_dir() / "bad.jsonl").string();
  std::ofstream(path) << "{this is not json}\n";
  try {
    load_jsonl(path, kDamageCategories);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":1") != std::string::npos);
  }
}

TEST_CASE("out-of-bounds boxes are clamped on load") {
  const auto path = (temp_dir() / "clamp.jsonl").string();
  std::ofstream(path) << R"({"image":"x.png","width":10,"height":10,"objects":[)"
                      << R"({"category":"crack","bbox":[-5,2,15,8]}]})" << "\n";
  Dataset ds = load_jsonl(path, kDamageCategories);
  CHECK(ds.records[0].labels[0].box == Box{0, 2, 10, 8});
}

TEST_CASE("voc xml fixture with one crack") {
  const auto path = (temp_dir() / "one.xml").string();
  std::ofstream(path) << R"(<annotation>
  <filename>one.png</filename>
  <size><width>640</width><height>480</height><depth>3</depth></size>
  <object><name>crack</name><bndbox><xmin>10</xmin><ymin>20</ymin><xmax>30</xmax><ymax>40</ymax></bndbox></object>
</annotation>)";
  ImageRecord rec = load_voc_xml(path, kDamageCategories);
  CHECK(rec.width == 640);
  CHECK(rec.height == 480);
  REQUIRE(rec.labels.size() == 1);
  CHECK(rec.labels[0].category == 0);
  CHECK(rec.labels[0].box == Box{10, 20, 30, 40});
}

TEST_CASE("voc xml missing bndbox names the element") {
  const auto path = (temp_dir() / "nobox.xml").string();
  std::ofstream(path) << R"(<annotation><size><width>10</width><height>10</height></size>
<object><name>crack</name></object></annotation>)";
  CHECK_THROWS_WITH_AS(load_voc_xml(path, kDamageCategories),
                       doctest::Contains("bndbox"), Error);
}

TEST_CASE("holdout split 10 records at 0.8") {
  Dataset ds;
  for (int i = 0; i < 10; ++i) {
    ImageRecord r;
    r.image_path = "r" + std::to_string(i);
    r.width = r.height = 32;
    r.labels = {{i % 2, {1, 1, 5, 5}}};
    ds.records.push_back(r);
  }
  const auto split = partition_holdout(ds, 0.8, 7);
  CHECK(split.train.size() == 8);
  CHECK(split.test.size() == 2);

  const auto again = partition_holdout(ds, 0.8, 7);
  CHECK(again.train == split.train);
  CHECK(again.test == split.test);

  std::set<int> all(split.train.begin(), split.train.end());
  all.insert(split.test.begin(), split.test.end());
  CHECK(all.size() == 10);
}

TEST_CASE("stratified kfold puts one of each dominant category per fold") {
  Dataset ds;
  for (int i = 0; i < 10; ++i) {
    ImageRecord r;
    r.image_path = "r" + std::to_string(i);
    r.width = r.height = 32;
    r.labels = {{i < 5 ? 0 : 1, {1, 1, 5, 5}}};
    ds.records.push_back(r);
  }
  const auto folds = partition_kfold(ds, 5, 3);
  REQUIRE(folds.size() == 5);
  std::set<int> seen;
  for (const auto& fold : folds) {
    REQUIRE(fold.size() == 2);
    int a_count = 0;
    for (int i : fold) {
      seen.insert(i);
      if (dominant_category(ds.records[static_cast<size_t>(i)]) == 0) ++a_count;
    }
    CHECK(a_count == 1);
  }
  CHECK(seen.size() == 10);

  CHECK_THROWS_AS(partition_kfold(ds, 11, 0), Error);
}

TEST_CASE("compute_stats on a single small object") {
  Dataset ds;
  ImageRecord r;
  r.image_path = "x";
  r.width = 1280;
  r.height = 960;
  r.labels = {{0, {0, 0, 64, 48}}};
  ds.records = {r};
  const auto s = compute_stats(ds);
  CHECK(s.total_labels == 1);
  CHECK(s.area_median == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(s.category_fractions[0] == doctest::Approx(1.0));
  CHECK(s.joint.total() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("compute_stats median uses the midpoint rule and fractions sum to one") {
  Dataset ds;
  ImageRecord r;
  r.image_path = "x";
  r.width = 100;
  r.height = 100;
  // areas 100 and 400 -> relative 0.01 and 0.04; median = 0.025
  r.labels = {{0, {0, 0, 10, 10}}, {1, {0, 0, 20, 20}}};
  ds.records = {r};
  const auto s = compute_stats(ds);
  CHECK(s.area_median == doctest::Approx(0.025).epsilon(1e-12));
  double frac = 0;
  for (double f : s.category_fractions) frac += f;
  CHECK(frac == doctest::Approx(1.0).epsilon(1e-9));
  size_t count = 0;
  for (size_t c : s.category_counts) count += c;
  CHECK(count == s.total_labels);

  ImageRecord empty;
  empty.image_path = "e";
  empty.width = empty.height = 10;
  Dataset no_labels;
  no_labels.records = {empty};
  CHECK_THROWS_AS(compute_stats(no_labels), Error);
}

TEST_CASE("identical objects give zero quantile spread") {
  Dataset ds;
  ImageRecord r;
  r.image_path = "x";
  r.width = 100;
  r.height = 100;
  for (int i = 0; i < 5; ++i) r.labels.push_back({0, {0, 0, 10, 10}});
  ds.records = {r};
  const auto s = compute_stats(ds);
  CHECK(s.area_q25 == s.area_q75);
}

namespace {
Dataset uniform_box_dataset(double w, double h, int n, int cat, int num_cats) {
  Dataset ds;
  ds.categories.clear();
  for (int c = 0; c < num_cats; ++c) ds.categories.push_back("c" + std::to_string(c));
  for (int i = 0; i < n; ++i) {
    ImageRecord r;
    r.image_path = "r" + std::to_string(i);
    r.width = r.height = 100;
    r.labels = {{cat, {0, 0, w, h}}};
    ds.records.push_back(r);
  }
  return ds;
}
}  // namespace

TEST_CASE("rank_source_classes prefers the matching distribution") {
  // target: 10x10 boxes. source category 0 identical, category 1 far away.
  Dataset target = uniform_box_dataset(10, 10, 8, 0, 1);
  Dataset source = uniform_box_dataset(10, 10, 8, 0, 2);
  Dataset far = uniform_box_dataset(80, 5, 8, 1, 2);
  for (auto& r : far.records) source.records.push_back(r);

  const auto ranked = rank_source_classes(compute_stats(source), compute_stats(target));
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].first == 0);
  CHECK(ranked[0].second == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ranked[1].second == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("hellinger is symmetric and bounded") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ScaleAspectHist a, b;
    for (int i = 0; i < 40; ++i) {
      a.add(rng.uniform(1e-4, 0.5), rng.uniform(0.2, 5));
      b.add(rng.uniform(1e-4, 0.5), rng.uniform(0.2, 5));
    }
    a.normalize();
    b.normalize();
    const double d = hellinger(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0 + 1e-12);
    CHECK(d == doctest::Approx(hellinger(b, a)).epsilon(1e-12));
  }
}
