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

// Learnable fields and volume rendering.
//
// SceneField is a dense vertex grid over an axis-aligned box. Each vertex holds
// four raw values (density, r, g, b); queries interpolate the raw values
// trilinearly and then activate: density = softplus, color = sigmoid.
// TextureField is the 2D analogue over the square [-1,1]^2 enclosing the eye
// disk, with three raw color values per vertex and bilinear interpolation.
//
// Gradients are written by hand. Every backward call adds into caller-owned
// buffers laid out exactly like the parameter vectors.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "geometry.hpp"

namespace cf {

double softplus(double x);
double sigmoid(double x);

struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct FieldSample {
  double density = 0.0;
  Vec3 color = Vec3::Zero();
};

class SceneField {
 public:
  static constexpr int kChannels = 4;  // density, r, g, b

  SceneField() = default;
  SceneField(const Aabb& box, std::array<int, 3> resolution,
             double density_raw = 0.0, double color_raw = 0.0);

  const Aabb& box() const { return box_; }
  const std::array<int, 3>& resolution() const { return resolution_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t vertex_offset(int ix, int iy, int iz) const {
    return ((static_cast<std::size_t>(iz) * resolution_[1] + iy) * resolution_[0] + ix) *
           kChannels;
  }

  // Direction is accepted for interface symmetry; color is view-independent.
  FieldSample eval(const Vec3& point, const Vec3& direction = Vec3::UnitZ()) const;

  // Trilinear stencil of a point; false when the point lies outside the box.
  struct Stencil {
    std::size_t base = 0;  // offset of the lowest corner
    Vec3 frac = Vec3::Zero();
  };
  bool stencil(const Vec3& point, Stencil& s) const;
  // Interpolated raw values (density, r, g, b) at a stencil.
  std::array<double, 4> interpolate(const Stencil& s) const;
  // Adds w * grad_raw into grad at the stencil's eight corners.
  void scatter(const Stencil& s, const std::array<double, 4>& grad_raw,
               std::span<double> grad) const;
  // d(sum_c grad_raw[c] * raw_c)/d(point).
  Vec3 spatial_gradient(const Stencil& s, const std::array<double, 4>& grad_raw) const;

 private:
  Aabb box_;
  std::array<int, 3> resolution_{2, 2, 2};
  std::array<std::size_t, 8> corner_offsets_{};
  Vec3 to_grid_ = Vec3::Ones();
  std::vector<double> params_;
};

class TextureField {
 public:
  static constexpr int kChannels = 3;

  TextureField() = default;
  explicit TextureField(int resolution, double color_raw = 0.0);

  int resolution() const { return resolution_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t vertex_offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * resolution_ + col) * kChannels;
  }
  // Grid vertex position in disk coordinates (py, px).
  Vec2 vertex_position(int row, int col) const;

  // Color at disk coordinate p = (py, px); throws for |p| > 1.
  Vec3 eval(const Vec2& p) const;
  // Adds d(grad_color . color)/d(params) into grad.
  void backward(const Vec2& p, const Vec3& grad_color, std::span<double> grad) const;

 private:
  struct Stencil {
    std::size_t base = 0;
    double fr = 0.0;
    double fc = 0.0;
  };
  Stencil stencil(const Vec2& p) const;

  int resolution_ = 2;
  std::vector<double> params_;
};

struct SamplingSpec {
  double near = 100.0;
  double far = 500.0;
  int samples = 64;

  void validate() const;
};

struct RenderResult {
  Vec3 color = Vec3::Zero();
  double accumulation = 0.0;
};

// Intermediates of one volume_render call, consumed by the reverse pass.
struct RenderTape {
  bool recorded = false;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  struct Sample {
    double t = 0.0;
    double delta = 0.0;
    bool inside = false;
    SceneField::Stencil stencil;
    std::array<double, 4> raw{};
    double sigma = 0.0;
    Vec3 color = Vec3::Zero();
    double weight = 0.0;  // T_i * alpha_i
  };
  std::vector<Sample> samples;
  double final_transmittance = 1.0;
};

// Quadrature over explicit samples: alpha_i = 1 - exp(-sigma_i delta_i),
// T_i = prod_{j<i} (1 - alpha_j), color = sum T_i alpha_i c_i.
RenderResult composite(std::span<const double> sigmas, std::span<const Vec3> colors,
                       std::span<const double> deltas);

// Renders `field` along origin + t * direction with stratified samples over
// [near, far]. jitter[i] in [0,1) places sample i inside its bin; an empty
// span uses bin centers. Records intermediates when `tape` is non-null.
RenderResult volume_render(const SceneField& field, const Vec3& origin,
                           const Vec3& direction, const SamplingSpec& sampling,
                           std::span<const double> jitter = {},
                           RenderTape* tape = nullptr);

struct RayGradient {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::Zero();
};

// Reverse pass of volume_render. Adds parameter gradients into grad and, when
// ray_grad is non-null, returns the gradient with respect to the ray.
void volume_render_backward(const SceneField& field, const RenderTape& tape,
                            const Vec3& grad_color, double grad_accumulation,
                            std::span<double> grad, RayGradient* ray_grad = nullptr);

}  // namespace cf
