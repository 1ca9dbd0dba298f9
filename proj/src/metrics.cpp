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

#include "metrics.hpp"

#include <array>
#include <cmath>

#include "errors.hpp"

namespace cf {

namespace {

void check_pair(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ArgumentError("metric inputs differ in shape");
  }
  if (a.empty()) throw ArgumentError("metric inputs are empty");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_pair(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.width < kWin || a.height < kWin) {
    throw ArgumentError("SSIM needs images of at least 11x11 pixels");
  }
  std::array<double, kWin> g{};
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double acc = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int y = 0; y + kWin <= a.height; ++y) {
      for (int x = 0; x + kWin <= a.width; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int j = 0; j < kWin; ++j) {
          for (int i = 0; i < kWin; ++i) {
            const double w = g[j] * g[i];
            const double u = a.at(y + j, x + i, ch);
            const double v = b.at(y + j, x + i, ch);
            mx += w * u;
            my += w * v;
            sxx += w * u * u;
            syy += w * v * v;
            sxy += w * u * v;
          }
        }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cov = sxy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace cf
