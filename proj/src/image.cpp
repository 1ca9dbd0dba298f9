// Copyright 2026 The CorneaField Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "errors.hpp"

namespace cf {

std::uint16_t quantize16(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  (void)png;
  throw IoError(std::string("libpng: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::string& path, PngInfo* info) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open image '" + path + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path + "' is not a PNG file");
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop pinfo = png ? png_create_info_struct(png) : nullptr;
  if (!png || !pinfo) throw IoError("libpng initialisation failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &pinfo};

  Image img;
  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, pinfo);
    const int depth = png_get_bit_depth(png, pinfo);
    const int color = png_get_color_type(png, pinfo);
    if (color & PNG_COLOR_MASK_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_swap(png);  // native little-endian u16
    png_read_update_info(png, pinfo);

    const int w = static_cast<int>(png_get_image_width(png, pinfo));
    const int h = static_cast<int>(png_get_image_height(png, pinfo));
    const int ch = png_get_channels(png, pinfo);
    const int out_depth = png_get_bit_depth(png, pinfo);
    const std::size_t rowbytes = png_get_rowbytes(png, pinfo);
    std::vector<unsigned char> buf(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + rowbytes * y;
    png_read_image(png, rows.data());

    const bool has_alpha = ch == 2 || ch == 4;
    const int keep = has_alpha ? ch - 1 : ch;
    img = Image(w, h, keep);
    const double full = out_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < keep; ++c) {
          const std::size_t idx = static_cast<std::size_t>(x) * ch + c;
          double v;
          if (out_depth == 16) {
            std::uint16_t s;
            std::copy_n(rows[y] + 2 * idx, 2, reinterpret_cast<unsigned char*>(&s));
            v = s;
          } else {
            v = rows[y][idx];
          }
          img.at(y, x, c) = v / full;
        }
      }
    }
    if (info) {
      info->bit_depth = out_depth;
      info->channels = keep;
    }
  } catch (const Error& e) {
    throw IoError("failed to read '" + path + "': " + e.what());
  }
  return img;
}

void write_png(const std::string& path, const Image& image, int bit_depth) {
  if (image.channels != 1 && image.channels != 3) {
    throw ArgumentError("write_png supports 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("bit depth must be 8 or 16");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path + "' for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop pinfo = png ? png_create_info_struct(png) : nullptr;
  if (!png || !pinfo) throw IoError("libpng initialisation failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &pinfo};

  const int bytes = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels * bytes;
  std::vector<unsigned char> buf(rowbytes * image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const std::size_t i =
            y * rowbytes + (static_cast<std::size_t>(x) * image.channels + c) * bytes;
        const double v = image.at(y, x, c);
        if (bit_depth == 16) {
          const std::uint16_t q = quantize16(v);
          buf[i] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
          buf[i + 1] = static_cast<unsigned char>(q & 0xff);
        } else {
          buf[i] = quantize8(v);
        }
      }
    }
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, pinfo, image.width, image.height, bit_depth,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, pinfo);
    for (int y = 0; y < image.height; ++y) png_write_row(png, buf.data() + y * rowbytes);
    png_write_end(png, nullptr);
  } catch (const Error& e) {
    throw IoError("failed to write '" + path + "': " + e.what());
  }
}

}  // namespace cf
