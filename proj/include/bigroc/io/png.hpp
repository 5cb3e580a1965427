#pragma once

// Lossless PNG read/write through libpng. Pixels map linearly between the
// integer code range and a declared value range; writes are 16-bit so refined
// perturbations survive the round trip to within (hi - lo) / 65535.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "bigroc/error.hpp"
#include "bigroc/nn/tensor.hpp"
#include "bigroc/threat_model.hpp"

namespace bigroc::io {

struct PngImage {
  nn::Shape shape;            // channels 1 (gray) or 3 (RGB)
  std::vector<double> chw;    // values in the requested range
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads an 8- or 16-bit gray / RGB PNG (palette and alpha are expanded and
/// dropped) and maps codes [0, max] onto `range`.
inline PngImage read_png(const std::filesystem::path& path, const PixelRange& range) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw IoError("libpng: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> data;
  std::vector<png_bytep> rows;
  PngImage out;
  int bytes = 1;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order on little-endian machines
  png_read_update_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int ch = png_get_channels(png, info);
  bytes = png_get_bit_depth(png, info) == 16 ? 2 : 1;
  const std::size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (ch != 1 && ch != 3) throw IoError("unsupported channel count in " + path.string());
  out.shape = nn::Shape{ch, static_cast<int>(h), static_cast<int>(w)};
  out.chw.resize(out.shape.size());
  const double maxv = bytes == 2 ? 65535.0 : 255.0;
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const std::size_t off = (static_cast<std::size_t>(x) * ch + c) * bytes;
        const unsigned code = bytes == 2 ? static_cast<unsigned>(rows[y][off]) |
                                               (static_cast<unsigned>(rows[y][off + 1]) << 8)
                                         : rows[y][off];
        out.chw[(static_cast<std::size_t>(c) * h + y) * w + x] =
            range.lo + range.width() * (code / maxv);
      }
  return out;
}

/// Writes a CHW image with values in `range` as a 16-bit PNG. Values are
/// clamped to the range before quantisation.
inline void write_png(const std::filesystem::path& path, const nn::Shape& shape,
                      const std::vector<double>& chw, const PixelRange& range) {
  bigroc::detail::require(shape.c == 1 || shape.c == 3, "write_png: need 1 or 3 channels");
  bigroc::detail::require(chw.size() == shape.size(), "write_png: value count does not match shape");
  const int w = shape.w, h = shape.h, ch = shape.c;
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * ch * 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double v = chw[(static_cast<std::size_t>(c) * h + y) * w + x];
        if (!std::isfinite(v)) throw IoError("write_png: non-finite pixel in " + path.string());
        v = std::clamp((v - range.lo) / range.width(), 0.0, 1.0);
        const unsigned code = static_cast<unsigned>(std::lround(v * 65535.0));
        const std::size_t off = ((static_cast<std::size_t>(y) * w + x) * ch + c) * 2;
        data[off] = static_cast<unsigned char>(code >> 8);  // PNG is big-endian
        data[off + 1] = static_cast<unsigned char>(code & 0xFF);
      }

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw IoError("libpng: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * w * ch * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 16, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw IoError("short write to " + path.string());
}

template <class T>
void write_png(const std::filesystem::path& path, const nn::Shape& shape, const nn::Vec<T>& v,
               const PixelRange& range) {
  write_png(path, shape, std::vector<double>(v.data(), v.data() + v.size()), range);
}

/// Tiles equally shaped images into a rows x cols grid (row-major order) with
/// a one-pixel gutter at the range midpoint, each image upscaled by `zoom`.
template <class T>
void write_grid(const std::filesystem::path& path, const nn::Shape& shape,
                const std::vector<nn::Vec<T>>& images, int cols, const PixelRange& range,
                int zoom = 4) {
  bigroc::detail::require(!images.empty() && cols >= 1 && zoom >= 1, "write_grid: empty grid");
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  const int cw = shape.w * zoom + 1, chh = shape.h * zoom + 1;
  const nn::Shape g{shape.c, rows * chh + 1, cols * cw + 1};
  std::vector<double> out(g.size(), 0.5 * (range.lo + range.hi));
  for (std::size_t k = 0; k < images.size(); ++k) {
    bigroc::detail::require(images[k].size() == static_cast<Eigen::Index>(shape.size()),
                            "write_grid: image " + std::to_string(k) + " has the wrong size");
    const int oy = static_cast<int>(k) / cols * chh + 1, ox = static_cast<int>(k) % cols * cw + 1;
    for (int c = 0; c < shape.c; ++c)
      for (int y = 0; y < shape.h * zoom; ++y)
        for (int x = 0; x < shape.w * zoom; ++x)
          out[(static_cast<std::size_t>(c) * g.h + oy + y) * g.w + ox + x] = static_cast<double>(
              images[k][(static_cast<std::size_t>(c) * shape.h + y / zoom) * shape.w + x / zoom]);
  }
  write_png(path, g, out, range);
}

}  // namespace bigroc::io
