#include "sddkit/raster.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "sddkit/common.hpp"

namespace sddkit {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Raster read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, "png: cannot open ", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("png: failed to decode ", path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Raster img(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.data.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Raster& img, const std::string& path) {
  require(!img.empty(), "png: refusing to write empty raster to ", path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, "png: cannot open ", path, " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("png: failed to encode ", path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_const_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.data.data() + static_cast<size_t>(y) * img.width * 3;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

void resize_row(const Raster& src, Raster& dst, double sx, double sy, int y) {
  for (int x = 0; x < dst.width; ++x) {
    // sample at pixel centers
    const double fx = (x + 0.5) * sx - 0.5;
    const double fy = (y + 0.5) * sy - 0.5;
    const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
    const int x1 = std::min(x0 + 1, src.width - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ax = std::clamp(fx - x0, 0.0, 1.0);
    const double ay = std::clamp(fy - y0, 0.0, 1.0);
    for (int c = 0; c < 3; ++c) {
      const double top = src.at(x0, y0, c) * (1 - ax) + src.at(x1, y0, c) * ax;
      const double bot = src.at(x0, y1, c) * (1 - ax) + src.at(x1, y1, c) * ax;
      dst.at(x, y, c) = static_cast<uint8_t>(std::lround(top * (1 - ay) + bot * ay));
    }
  }
}

}  // namespace

Raster resize_bilinear(const Raster& src, int new_w, int new_h, kernels::Exec exec) {
  require(new_w > 0 && new_h > 0, "resize: target must be positive");
  require(!src.empty(), "resize: empty source");
  if (new_w == src.width && new_h == src.height) return src;
  Raster dst(new_w, new_h);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  if (exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(static) num_threads(kernels::worker_count())
    for (int y = 0; y < new_h; ++y) resize_row(src, dst, sx, sy, y);
  } else {
    for (int y = 0; y < new_h; ++y) resize_row(src, dst, sx, sy, y);
  }
  return dst;
}

Raster crop(const Raster& src, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= src.width &&
              y0 + h <= src.height,
          "crop: window ", x0, ",", y0, " ", w, "x", h, " outside ", src.width, "x",
          src.height);
  Raster out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(&src.data[((static_cast<size_t>(y0) + y) * src.width + x0) * 3],
                static_cast<size_t>(w) * 3, &out.data[static_cast<size_t>(y) * w * 3]);
  return out;
}

void paste(Raster& dst, const Raster& src, int x0, int y0) {
  for (int y = 0; y < src.height; ++y) {
    const int dy = y0 + y;
    if (dy < 0 || dy >= dst.height) continue;
    for (int x = 0; x < src.width; ++x) {
      const int dx = x0 + x;
      if (dx < 0 || dx >= dst.width) continue;
      for (int c = 0; c < 3; ++c) dst.at(dx, dy, c) = src.at(x, y, c);
    }
  }
}

void draw_box(Raster& img, const Box& b, uint8_t r, uint8_t g, uint8_t bch) {
  const int x0 = std::clamp(static_cast<int>(std::lround(b.xmin)), 0, img.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(b.ymin)), 0, img.height - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(b.xmax)) - 1, 0, img.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround(b.ymax)) - 1, 0, img.height - 1);
  auto set = [&](int x, int y) {
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = bch;
  };
  for (int t = 0; t < 2; ++t) {
    const int yt = std::min(y0 + t, img.height - 1);
    const int yb = std::max(y1 - t, 0);
    for (int x = x0; x <= x1; ++x) {
      set(x, yt);
      set(x, yb);
    }
    const int xl = std::min(x0 + t, img.width - 1);
    const int xr = std::max(x1 - t, 0);
    for (int y = y0; y <= y1; ++y) {
      set(xl, y);
      set(xr, y);
    }
  }
}

}  // namespace sddkit
