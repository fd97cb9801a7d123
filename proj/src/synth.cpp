#include "sddkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sddkit/common.hpp"
#include "sddkit/rng.hpp"

namespace fs = std::filesystem;

namespace sddkit {

namespace {

uint8_t clamp8(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

void fill_background(Raster& img, Rng& rng, double level, double noise) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint8_t v = clamp8(level + rng.normal() * noise);
      img.at(x, y, 0) = v;
      img.at(x, y, 1) = clamp8(v - 2);
      img.at(x, y, 2) = clamp8(v - 4);
    }
}

void put_tinted(Raster& img, int x, int y, const uint8_t tint[3], double jitter, Rng& rng) {
  const double j = rng.normal() * jitter;
  img.at(x, y, 0) = clamp8(tint[0] + j);
  img.at(x, y, 1) = clamp8(tint[1] + j);
  img.at(x, y, 2) = clamp8(tint[2] + j);
}

// jagged line spanning the box's long axis, vertical spread rescaled so the
// stroke touches all four box edges
void draw_polyline(Raster& img, int x0, int y0, int w, int h, const CategoryShape& cs,
                   Rng& rng) {
  const bool horizontal = w >= h;
  const int len = horizontal ? w : h;
  const int spread = horizontal ? h : w;
  const int thickness = std::max(1, spread / 4);

  const int knots = 7;
  std::vector<double> offs(knots);
  for (double& o : offs) o = rng.uniform();
  const auto [mn, mx] = std::minmax_element(offs.begin(), offs.end());
  const double lo = *mn, hi = std::max(*mx, lo + 1e-9);
  for (double& o : offs) o = (o - lo) / (hi - lo) * std::max(0, spread - thickness);

  for (int t = 0; t < len; ++t) {
    const double pos = static_cast<double>(t) / std::max(1, len - 1) * (knots - 1);
    const int k = std::min(static_cast<int>(pos), knots - 2);
    const double f = pos - k;
    const int off = static_cast<int>(std::lround(offs[static_cast<size_t>(k)] * (1 - f) +
                                                 offs[static_cast<size_t>(k) + 1] * f));
    for (int s = 0; s < thickness; ++s) {
      const int x = horizontal ? x0 + t : x0 + off + s;
      const int y = horizontal ? y0 + off + s : y0 + t;
      if (x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
        put_tinted(img, x, y, cs.tint, 6, rng);
    }
  }
}

void draw_blob(Raster& img, int x0, int y0, int w, int h, const CategoryShape& cs,
               Rng& rng) {
  const double cx = x0 + (w - 1) / 2.0, cy = y0 + (h - 1) / 2.0;
  const double rx = std::max(0.5, w / 2.0), ry = std::max(0.5, h / 2.0);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) put_tinted(img, x, y, cs.tint, 8, rng);
    }
}

// ragged radial polygon normalized per-axis to exactly fill the box
void draw_patch(Raster& img, int x0, int y0, int w, int h, const CategoryShape& cs,
                Rng& rng) {
  const int kVerts = 12;
  std::vector<double> px(kVerts), py(kVerts);
  for (int i = 0; i < kVerts; ++i) {
    const double a = 2.0 * M_PI * i / kVerts;
    const double r = rng.uniform(0.45, 1.0);
    px[static_cast<size_t>(i)] = r * std::cos(a);
    py[static_cast<size_t>(i)] = r * std::sin(a);
  }
  const auto [xmn, xmx] = std::minmax_element(px.begin(), px.end());
  const auto [ymn, ymx] = std::minmax_element(py.begin(), py.end());
  for (int i = 0; i < kVerts; ++i) {
    px[static_cast<size_t>(i)] = x0 + (px[static_cast<size_t>(i)] - *xmn) / (*xmx - *xmn) * (w - 1);
    py[static_cast<size_t>(i)] = y0 + (py[static_cast<size_t>(i)] - *ymn) / (*ymx - *ymn) * (h - 1);
  }

  // even-odd scanline fill
  for (int y = y0; y < y0 + h; ++y) {
    const double sy = y + 0.0;
    std::vector<double> xs;
    for (int i = 0; i < kVerts; ++i) {
      const double ax = px[static_cast<size_t>(i)], ay = py[static_cast<size_t>(i)];
      const double bx = px[static_cast<size_t>((i + 1) % kVerts)];
      const double by = py[static_cast<size_t>((i + 1) % kVerts)];
      if ((ay <= sy && by > sy) || (by <= sy && ay > sy))
        xs.push_back(ax + (sy - ay) / (by - ay) * (bx - ax));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      const int xa = std::max(x0, static_cast<int>(std::ceil(xs[i])));
      const int xb = std::min(x0 + w - 1, static_cast<int>(std::floor(xs[i + 1])));
      for (int x = xa; x <= xb; ++x) put_tinted(img, x, y, cs.tint, 10, rng);
    }
  }
  // guarantee edge contact even when the fill rounds inward
  draw_blob(img, x0 + w / 2 - 1, y0, 2, h, cs, rng);
  draw_blob(img, x0, y0 + h / 2 - 1, w, 2, cs, rng);
}

void draw_stripes(Raster& img, int x0, int y0, int w, int h, const CategoryShape& cs,
                  Rng& rng) {
  const uint8_t base[3] = {clamp8(cs.tint[0] + 40), clamp8(cs.tint[1] + 40),
                           clamp8(cs.tint[2] + 40)};
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) put_tinted(img, x, y, base, 6, rng);

  const bool along_x = w >= h;
  const int span = along_x ? h : w;
  const int period = std::max(3, span / 5);
  const int bar = std::max(1, period / 2);
  for (int s = 0; s < span; ++s) {
    if (s % period >= bar) continue;
    for (int t = 0; t < (along_x ? w : h); ++t) {
      const int x = along_x ? x0 + t : x0 + s;
      const int y = along_x ? y0 + s : y0 + t;
      put_tinted(img, x, y, cs.tint, 6, rng);
    }
  }
}

}  // namespace

SynthConfig synth_target_preset(int count, int image_size, uint64_t seed) {
  SynthConfig cfg;
  cfg.count = count;
  cfg.image_size = image_size;
  cfg.seed = seed;
  cfg.categories = kDamageCategories;
  cfg.mix = {0.35, 0.15, 0.13, 0.37};
  cfg.shapes = {
      {Archetype::polyline, 0.005, 0.03, 5.0, 10.0, true, {45, 40, 40}},
      {Archetype::blob, 0.004, 0.02, 1.0, 1.3, true, {70, 70, 105}},
      {Archetype::patch, 0.015, 0.08, 1.0, 1.7, true, {120, 95, 70}},
      {Archetype::stripes, 0.02, 0.12, 1.2, 2.0, true, {100, 50, 45}},
  };
  return cfg;
}

SynthConfig synth_source_preset(int count, int image_size, uint64_t seed) {
  SynthConfig cfg;
  cfg.count = count;
  cfg.image_size = image_size;
  cfg.seed = seed;
  cfg.categories = {"line-fine", "line-wide", "dot", "disc",
                    "patch-small", "patch-large", "grate", "band"};
  cfg.mix = {0.15, 0.10, 0.15, 0.10, 0.15, 0.10, 0.15, 0.10};
  cfg.shapes = {
      {Archetype::polyline, 0.004, 0.025, 5.0, 11.0, true, {50, 45, 45}},
      {Archetype::polyline, 0.03, 0.10, 3.0, 6.0, true, {60, 55, 50}},
      {Archetype::blob, 0.001, 0.008, 1.0, 1.3, true, {75, 75, 100}},
      {Archetype::blob, 0.02, 0.10, 1.0, 1.4, true, {65, 80, 95}},
      {Archetype::patch, 0.01, 0.06, 1.0, 1.8, true, {115, 95, 75}},
      {Archetype::patch, 0.08, 0.25, 1.0, 1.6, true, {125, 100, 80}},
      {Archetype::stripes, 0.015, 0.10, 1.2, 2.2, true, {95, 55, 50}},
      {Archetype::stripes, 0.1, 0.3, 1.5, 3.0, true, {105, 60, 50}},
  };
  return cfg;
}

SynthConfig synth_preset(const std::string& name, int count, int image_size, uint64_t seed) {
  if (name == "target") return synth_target_preset(count, image_size, seed);
  if (name == "source") return synth_source_preset(count, image_size, seed);
  fail("synth: unknown preset \"", name, "\" (known: target, source)");
}

Dataset generate(const SynthConfig& cfg) {
  require(cfg.count > 0 && cfg.image_size >= 16, "synth: bad count/size");
  require(cfg.categories.size() == cfg.mix.size() &&
              cfg.categories.size() == cfg.shapes.size(),
          "synth: categories/mix/shapes must align");
  double mix_sum = 0;
  for (double m : cfg.mix) mix_sum += m;
  require(std::abs(mix_sum - 1.0) < 1e-9, "synth: mix must sum to 1, got ", mix_sum);
  require(cfg.min_objects >= 1 && cfg.max_objects >= cfg.min_objects,
          "synth: bad object count range");

  Dataset ds;
  ds.categories = cfg.categories;
  const int S = cfg.image_size;

  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i)));
    auto raster = std::make_shared<Raster>(S, S);
    fill_background(*raster, rng, cfg.bg_level, cfg.bg_noise);

    ImageRecord rec;
    char name[64];
    std::snprintf(name, sizeof(name), "images/img_%05d.png", i);
    rec.image_path = name;
    rec.width = S;
    rec.height = S;

    const int objects = cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
    for (int o = 0; o < objects; ++o) {
      // category by mix
      const double u = rng.uniform();
      int cat = 0;
      double acc = 0;
      for (size_t c = 0; c < cfg.mix.size(); ++c) {
        acc += cfg.mix[c];
        if (u < acc) {
          cat = static_cast<int>(c);
          break;
        }
      }
      const CategoryShape& cs = cfg.shapes[static_cast<size_t>(cat)];

      int w = 0, h = 0, tries = 0;
      for (; tries < 50; ++tries) {
        const double area = std::exp(rng.uniform(std::log(cs.area_lo), std::log(cs.area_hi))) *
                            static_cast<double>(S) * S;
        double elong = std::exp(rng.uniform(std::log(cs.elong_lo), std::log(cs.elong_hi)));
        const double aspect = rng.bernoulli(0.5) ? elong : 1.0 / elong;
        w = static_cast<int>(std::lround(std::sqrt(area * aspect)));
        h = static_cast<int>(std::lround(std::sqrt(area / aspect)));
        w = std::max(w, 2);
        h = std::max(h, 2);
        if (w <= S - 2 && h <= S - 2) break;
      }
      require(tries < 50, "synth: object cannot fit image at configured scales");

      const int x0 = 1 + rng.uniform_int(S - w - 1);
      const int y0 = 1 + rng.uniform_int(S - h - 1);

      switch (cs.archetype) {
        case Archetype::polyline: draw_polyline(*raster, x0, y0, w, h, cs, rng); break;
        case Archetype::blob: draw_blob(*raster, x0, y0, w, h, cs, rng); break;
        case Archetype::patch: draw_patch(*raster, x0, y0, w, h, cs, rng); break;
        case Archetype::stripes: draw_stripes(*raster, x0, y0, w, h, cs, rng); break;
      }
      rec.labels.push_back({cat, Box{static_cast<double>(x0), static_cast<double>(y0),
                                     static_cast<double>(x0 + w), static_cast<double>(y0 + h)}});
    }
    rec.raster = raster;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_synth_dataset(const Dataset& ds, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "images");
  for (const auto& rec : ds.records) {
    require(rec.raster != nullptr, "synth: record ", rec.image_path, " has no raster");
    write_png(*rec.raster, (fs::path(out_dir) / rec.image_path).string());
  }
  save_jsonl(ds, (fs::path(out_dir) / "data.jsonl").string());
}

}  // namespace sddkit
