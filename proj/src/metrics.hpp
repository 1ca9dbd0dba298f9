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

#include "image.hpp"

namespace cf {

// PSNR reported for identical images (infinite in exact arithmetic).
inline constexpr double kPsnrCap = 100.0;

// Peak signal-to-noise ratio for [0,1] images, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1. Only fully covered windows count.
double ssim(const Image& a, const Image& b);

}  // namespace cf
