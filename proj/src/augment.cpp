#include "sddkit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sddkit/common.hpp"

namespace sddkit {

bool scale_crop(Sample& s, double scale, int origin_x, int origin_y) {
  const int w = std::max(1, static_cast<int>(std::lround(s.raster.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(s.raster.height * scale)));
  require(origin_x >= 0 && origin_y >= 0 && origin_x + w <= s.raster.width &&
              origin_y + h <= s.raster.height,
          "scale_crop: window outside image");

  for (const auto& l : s.labels) {
    if (l.box.xmin < origin_x || l.box.ymin < origin_y || l.box.xmax > origin_x + w ||
        l.box.ymax > origin_y + h)
      return false;
  }
  s.raster = crop(s.raster, origin_x, origin_y, w, h);
  for (auto& l : s.labels) {
    l.box.xmin -= origin_x;
    l.box.xmax -= origin_x;
    l.box.ymin -= origin_y;
    l.box.ymax -= origin_y;
  }
  return true;
}

void flip(Sample& s, FlipAxis axis) {
  Raster& img = s.raster;
  if (axis == FlipAxis::horizontal) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width / 2; ++x)
        for (int c = 0; c < 3; ++c)
          std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
    for (auto& l : s.labels) {
      const double xmin = img.width - l.box.xmax;
      const double xmax = img.width - l.box.xmin;
      l.box.xmin = xmin;
      l.box.xmax = xmax;
    }
  } else {
    for (int y = 0; y < img.height / 2; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c)
          std::swap(img.at(x, y, c), img.at(x, img.height - 1 - y, c));
    for (auto& l : s.labels) {
      const double ymin = img.height - l.box.ymax;
      const double ymax = img.height - l.box.ymin;
      l.box.ymin = ymin;
      l.box.ymax = ymax;
    }
  }
}

std::vector<std::tuple<int, int, double>> motion_blur_kernel(int length, double angle_deg) {
  require(length >= 1, "motion_blur: length must be >= 1, got ", length);
  const double rad = angle_deg * M_PI / 180.0;
  const double dx = std::cos(rad), dy = std::sin(rad);

  // nearest-pixel rasterized line through the kernel center; taps that land
  // on the same pixel merge
  std::map<std::pair<int, int>, int> taps;
  for (int i = 0; i < length; ++i) {
    const double t = i - (length - 1) / 2.0;
    ++taps[{static_cast<int>(std::lround(t * dx)), static_cast<int>(std::lround(t * dy))}];
  }
  std::vector<std::tuple<int, int, double>> kernel;
  kernel.reserve(taps.size());
  double acc = 0;
  size_t i = 0;
  for (const auto& [off, cnt] : taps) {
    double w;
    if (i + 1 == taps.size()) {
      w = 1.0 - acc;  // exact unit sum
    } else {
      w = static_cast<double>(cnt) / length;
      acc += w;
    }
    kernel.emplace_back(off.first, off.second, w);
    ++i;
  }
  return kernel;
}

namespace {

void blur_row(const Raster& src, Raster& dst,
              const std::vector<std::tuple<int, int, double>>& kernel, int y) {
  for (int x = 0; x < src.width; ++x) {
    double acc[3] = {0, 0, 0};
    for (const auto& [dx, dy, w] : kernel) {
      const int sx = std::clamp(x + dx, 0, src.width - 1);
      const int sy = std::clamp(y + dy, 0, src.height - 1);
      for (int c = 0; c < 3; ++c) acc[c] += w * src.at(sx, sy, c);
    }
    for (int c = 0; c < 3; ++c)
      dst.at(x, y, c) = static_cast<uint8_t>(std::clamp(std::lround(acc[c]), 0l, 255l));
  }
}

}  // namespace

Raster motion_blur(const Raster& img, int length, double angle_deg, kernels::Exec exec) {
  const auto kernel = motion_blur_kernel(length, angle_deg);
  if (kernel.size() == 1) return img;
  Raster out(img.width, img.height);
  if (exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(kernels::worker_count())
    for (int y = 0; y < img.height; ++y) blur_row(img, out, kernel, y);
  } else {
    for (int y = 0; y < img.height; ++y) blur_row(img, out, kernel, y);
  }
  return out;
}

void rgb_to_hls(double r, double g, double b, double& h, double& l, double& s) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  l = (mx + mn) / 2.0;
  if (mx == mn) {
    h = 0;
    s = 0;
    return;
  }
  const double d = mx - mn;
  s = l > 0.5 ? d / (2.0 - mx - mn) : d / (mx + mn);
  if (mx == r)
    h = (g - b) / d + (g < b ? 6.0 : 0.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h *= 60.0;
}

namespace {
double hue_component(double p, double q, double t) {
  if (t < 0) t += 360.0;
  if (t >= 360.0) t -= 360.0;
  if (t < 60.0) return p + (q - p) * t / 60.0;
  if (t < 180.0) return q;
  if (t < 240.0) return p + (q - p) * (240.0 - t) / 60.0;
  return p;
}
}  // namespace

void hls_to_rgb(double h, double l, double s, double& r, double& g, double& b) {
  if (s == 0) {
    r = g = b = l;
    return;
  }
  const double q = l < 0.5 ? l * (1.0 + s) : l + s - l * s;
  const double p = 2.0 * l - q;
  r = hue_component(p, q, h + 120.0);
  g = hue_component(p, q, h);
  b = hue_component(p, q, h - 120.0);
}

namespace {

void brightness_row(const Raster& src, Raster& dst, double delta, int y) {
  for (int x = 0; x < src.width; ++x) {
    double h, l, s;
    rgb_to_hls(src.at(x, y, 0) / 255.0, src.at(x, y, 1) / 255.0, src.at(x, y, 2) / 255.0,
               h, l, s);
    l = std::clamp(l + delta, 0.0, 1.0);
    double r, g, b;
    hls_to_rgb(h, l, s, r, g, b);
    dst.at(x, y, 0) = static_cast<uint8_t>(std::clamp(std::lround(r * 255.0), 0l, 255l));
    dst.at(x, y, 1) = static_cast<uint8_t>(std::clamp(std::lround(g * 255.0), 0l, 255l));
    dst.at(x, y, 2) = static_cast<uint8_t>(std::clamp(std::lround(b * 255.0), 0l, 255l));
  }
}

}  // namespace

Raster brightness_hls(const Raster& img, double delta, kernels::Exec exec) {
  require(delta >= -1.0 && delta <= 1.0, "brightness: delta must be in [-1, 1]");
  Raster out(img.width, img.height);
  if (exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(kernels::worker_count())
    for (int y = 0; y < img.height; ++y) brightness_row(img, out, delta, y);
  } else {
    for (int y = 0; y < img.height; ++y) brightness_row(img, out, delta, y);
  }
  return out;
}

Raster salt_pepper(const Raster& img, double density, uint64_t seed) {
  require(density >= 0.0 && density <= 1.0, "salt_pepper: density must be in [0, 1]");
  Raster out = img;
  Rng rng(seed);
  const size_t pixels = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < pixels; ++i) {
    if (rng.uniform() >= density) continue;
    const uint8_t v = rng.bernoulli(0.5) ? 255 : 0;
    out.data[i * 3 + 0] = v;
    out.data[i * 3 + 1] = v;
    out.data[i * 3 + 2] = v;
  }
  return out;
}

Sample letterbox_sample(const Sample& s, int target, uint8_t pad_value) {
  const auto t = LetterboxTransform::fit(s.raster.width, s.raster.height, target);
  Sample out;
  out.raster = Raster(target, target, pad_value);
  paste(out.raster, resize_bilinear(s.raster, t.scaled_w, t.scaled_h),
        static_cast<int>(t.pad_x), static_cast<int>(t.pad_y));
  out.labels = s.labels;
  for (auto& l : out.labels) l.box = t.apply(l.box);
  return out;
}

Sample augment_pipeline(const Sample& s, const AugmentConfig& cfg, Rng& rng,
                        PipelineTrace* trace) {
  PipelineTrace local;
  Sample cur = s;

  if (rng.bernoulli(cfg.p_geom)) {
    local.geom = true;
    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
      const int w = std::max(1, static_cast<int>(std::lround(cur.raster.width * scale)));
      const int h = std::max(1, static_cast<int>(std::lround(cur.raster.height * scale)));
      const int ox = rng.uniform_int(cur.raster.width - w + 1);
      const int oy = rng.uniform_int(cur.raster.height - h + 1);
      accepted = scale_crop(cur, scale, ox, oy);
    }
    local.geom_fallback = !accepted;  // identity fallback
  }

  if (rng.bernoulli(cfg.p_flip)) {
    local.flip = true;
    local.flip_axis = rng.bernoulli(0.5) ? FlipAxis::horizontal : FlipAxis::vertical;
    flip(cur, local.flip_axis);
  }

  if (rng.bernoulli(cfg.p_photo)) {
    local.photo = true;
    local.photo_op = rng.uniform_int(3);
    switch (local.photo_op) {
      case 0: {
        const int len = cfg.blur_len_min + rng.uniform_int(cfg.blur_len_max - cfg.blur_len_min + 1);
        const double angle = rng.uniform(cfg.blur_angle_min, cfg.blur_angle_max);
        cur.raster = motion_blur(cur.raster, len, angle);
        break;
      }
      case 1:
        cur.raster = brightness_hls(cur.raster, rng.uniform(cfg.brightness_min, cfg.brightness_max));
        break;
      default:
        cur.raster = salt_pepper(cur.raster, rng.uniform(cfg.sp_density_min, cfg.sp_density_max),
                                 rng.next_u64());
        break;
    }
  }

  Sample out = letterbox_sample(cur, cfg.target_size, cfg.pad_value);
  if (trace) *trace = local;
  return out;
}

}  // namespace sddkit
