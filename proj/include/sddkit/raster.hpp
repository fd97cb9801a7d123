#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sddkit/geometry.hpp"
#include "sddkit/kernels.hpp"

namespace sddkit {

// 8-bit RGB image, row-major, interleaved channels.
struct Raster {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // height * width * 3

  Raster() = default;
  Raster(int w, int h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  uint8_t at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  bool empty() const { return data.empty(); }

  bool operator==(const Raster&) const = default;
};

Raster read_png(const std::string& path);
void write_png(const Raster& img, const std::string& path);

Raster resize_bilinear(const Raster& src, int new_w, int new_h,
                       kernels::Exec exec = kernels::default_exec());

Raster crop(const Raster& src, int x0, int y0, int w, int h);

// Paste src into dst at (x0, y0); clipped against dst bounds.
void paste(Raster& dst, const Raster& src, int x0, int y0);

// 2 px rectangle outline, clipped to the image.
void draw_box(Raster& img, const Box& b, uint8_t r, uint8_t g, uint8_t bch);

}  // namespace sddkit
