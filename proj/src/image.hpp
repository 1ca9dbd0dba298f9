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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cf {

// Linear [0,1] raster, interleaved channels, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
};

// 16-bit quantization used by every 16-bit writer: round(v * 65535), clamped.
std::uint16_t quantize16(double v);
std::uint8_t quantize8(double v);

struct PngInfo {
  int bit_depth = 16;
  int channels = 3;
};

// Reads an 8- or 16-bit gray/gray+alpha/RGB/RGBA PNG. Alpha is dropped. The
// source depth is returned through `info` when non-null.
Image read_png(const std::string& path, PngInfo* info = nullptr);

// Writes 1- or 3-channel images at 8 or 16 bits.
void write_png(const std::string& path, const Image& image, int bit_depth = 16);

}  // namespace cf
