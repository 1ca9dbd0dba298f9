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

#include "fields.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace cf {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

SceneField::SceneField(const Aabb& box, std::array<int, 3> resolution,
                       double density_raw, double color_raw)
    : box_(box), resolution_(resolution) {
  for (int a = 0; a < 3; ++a) {
    if (resolution_[a] < 2) throw ArgumentError("scene grid needs >= 2 vertices per axis");
    if (!(box_.hi[a] > box_.lo[a])) throw ArgumentError("scene bounding box is empty");
    to_grid_[a] = (resolution_[a] - 1) / (box_.hi[a] - box_.lo[a]);
  }
  const std::size_t n = static_cast<std::size_t>(resolution_[0]) * resolution_[1] *
                        resolution_[2];
  params_.resize(n * kChannels);
  for (std::size_t v = 0; v < n; ++v) {
    params_[v * kChannels] = density_raw;
    for (int c = 1; c < kChannels; ++c) params_[v * kChannels + c] = color_raw;
  }
  for (int corner = 0; corner < 8; ++corner) {
    corner_offsets_[corner] = vertex_offset(corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
  }
}

bool SceneField::stencil(const Vec3& point, Stencil& s) const {
  if (!box_.contains(point)) return false;
  std::size_t idx[3];
  for (int a = 0; a < 3; ++a) {
    const double g = (point[a] - box_.lo[a]) * to_grid_[a];
    const int i = std::clamp(static_cast<int>(std::floor(g)), 0, resolution_[a] - 2);
    idx[a] = static_cast<std::size_t>(i);
    s.frac[a] = g - i;
  }
  s.base = vertex_offset(static_cast<int>(idx[0]), static_cast<int>(idx[1]),
                         static_cast<int>(idx[2]));
  return true;
}

namespace {

inline std::array<double, 8> trilinear_weights(const Vec3& f) {
  std::array<double, 8> w;
  for (int corner = 0; corner < 8; ++corner) {
    w[corner] = ((corner & 1) ? f.x() : 1.0 - f.x()) *
                ((corner & 2) ? f.y() : 1.0 - f.y()) *
                ((corner & 4) ? f.z() : 1.0 - f.z());
  }
  return w;
}

}  // namespace

std::array<double, 4> SceneField::interpolate(const Stencil& s) const {
  const auto w = trilinear_weights(s.frac);
  std::array<double, 4> raw{};
  for (int corner = 0; corner < 8; ++corner) {
    const double* v = &params_[s.base + corner_offsets_[corner]];
    for (int c = 0; c < kChannels; ++c) raw[c] += w[corner] * v[c];
  }
  return raw;
}

void SceneField::scatter(const Stencil& s, const std::array<double, 4>& grad_raw,
                         std::span<double> grad) const {
  const auto w = trilinear_weights(s.frac);
  for (int corner = 0; corner < 8; ++corner) {
    double* g = &grad[s.base + corner_offsets_[corner]];
    for (int c = 0; c < kChannels; ++c) g[c] += w[corner] * grad_raw[c];
  }
}

Vec3 SceneField::spatial_gradient(const Stencil& s,
                                  const std::array<double, 4>& grad_raw) const {
  const Vec3& f = s.frac;
  Vec3 d = Vec3::Zero();
  for (int corner = 0; corner < 8; ++corner) {
    const double* v = &params_[s.base + corner_offsets_[corner]];
    double value = 0.0;
    for (int c = 0; c < kChannels; ++c) value += grad_raw[c] * v[c];
    const double wx = (corner & 1) ? f.x() : 1.0 - f.x();
    const double wy = (corner & 2) ? f.y() : 1.0 - f.y();
    const double wz = (corner & 4) ? f.z() : 1.0 - f.z();
    const double sx = (corner & 1) ? 1.0 : -1.0;
    const double sy = (corner & 2) ? 1.0 : -1.0;
    const double sz = (corner & 4) ? 1.0 : -1.0;
    d.x() += value * sx * wy * wz;
    d.y() += value * wx * sy * wz;
    d.z() += value * wx * wy * sz;
  }
  return d.cwiseProduct(to_grid_);
}

FieldSample SceneField::eval(const Vec3& point, const Vec3& /*direction*/) const {
  FieldSample out;
  Stencil s;
  if (!stencil(point, s)) return out;
  const auto raw = interpolate(s);
  out.density = softplus(raw[0]);
  out.color = Vec3(sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3]));
  return out;
}

TextureField::TextureField(int resolution, double color_raw) : resolution_(resolution) {
  if (resolution_ < 2) throw ArgumentError("texture grid needs >= 2 vertices per axis");
  params_.assign(static_cast<std::size_t>(resolution_) * resolution_ * kChannels, color_raw);
}

Vec2 TextureField::vertex_position(int row, int col) const {
  const double step = 2.0 / (resolution_ - 1);
  return Vec2(-1.0 + row * step, -1.0 + col * step);
}

TextureField::Stencil TextureField::stencil(const Vec2& p) const {
  if (p.squaredNorm() > 1.0 + 1e-9) {
    throw ArgumentError("texture query outside the eye disk");
  }
  const double scale = (resolution_ - 1) / 2.0;
  const double gr = std::clamp((p.x() + 1.0) * scale, 0.0, resolution_ - 1.0);
  const double gc = std::clamp((p.y() + 1.0) * scale, 0.0, resolution_ - 1.0);
  const int r = std::clamp(static_cast<int>(std::floor(gr)), 0, resolution_ - 2);
  const int c = std::clamp(static_cast<int>(std::floor(gc)), 0, resolution_ - 2);
  return Stencil{vertex_offset(r, c), gr - r, gc - c};
}

Vec3 TextureField::eval(const Vec2& p) const {
  const Stencil s = stencil(p);
  const std::size_t row_step = static_cast<std::size_t>(resolution_) * kChannels;
  const double w[4] = {(1 - s.fr) * (1 - s.fc), (1 - s.fr) * s.fc, s.fr * (1 - s.fc),
                       s.fr * s.fc};
  const std::size_t off[4] = {0, kChannels, row_step, row_step + kChannels};
  Vec3 out;
  for (int c = 0; c < kChannels; ++c) {
    double raw = 0.0;
    for (int k = 0; k < 4; ++k) raw += w[k] * params_[s.base + off[k] + c];
    out[c] = sigmoid(raw);
  }
  return out;
}

void TextureField::backward(const Vec2& p, const Vec3& grad_color,
                            std::span<double> grad) const {
  const Stencil s = stencil(p);
  const std::size_t row_step = static_cast<std::size_t>(resolution_) * kChannels;
  const double w[4] = {(1 - s.fr) * (1 - s.fc), (1 - s.fr) * s.fc, s.fr * (1 - s.fc),
                       s.fr * s.fc};
  const std::size_t off[4] = {0, kChannels, row_step, row_step + kChannels};
  for (int c = 0; c < kChannels; ++c) {
    double raw = 0.0;
    for (int k = 0; k < 4; ++k) raw += w[k] * params_[s.base + off[k] + c];
    const double a = sigmoid(raw);
    const double g = grad_color[c] * a * (1.0 - a);
    for (int k = 0; k < 4; ++k) grad[s.base + off[k] + c] += w[k] * g;
  }
}

void SamplingSpec::validate() const {
  if (!(near >= 0.0) || !(far > near)) {
    throw ArgumentError("sampling bounds must satisfy 0 <= near < far");
  }
  if (samples < 1) throw ArgumentError("sampling needs at least one sample");
}

RenderResult composite(std::span<const double> sigmas, std::span<const Vec3> colors,
                       std::span<const double> deltas) {
  if (sigmas.size() != colors.size() || sigmas.size() != deltas.size()) {
    throw ArgumentError("composite: mismatched sample arrays");
  }
  RenderResult out;
  double transmittance = 1.0;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const double alpha = -std::expm1(-sigmas[i] * deltas[i]);
    const double w = transmittance * alpha;
    out.color += w * colors[i];
    out.accumulation += w;
    transmittance *= 1.0 - alpha;
  }
  return out;
}

RenderResult volume_render(const SceneField& field, const Vec3& origin,
                           const Vec3& direction, const SamplingSpec& sampling,
                           std::span<const double> jitter, RenderTape* tape) {
  sampling.validate();
  if (!jitter.empty() && jitter.size() != static_cast<std::size_t>(sampling.samples)) {
    throw ArgumentError("volume_render: jitter count must equal the sample count");
  }
  const double bin = (sampling.far - sampling.near) / sampling.samples;
  if (tape) {
    tape->recorded = true;
    tape->origin = origin;
    tape->direction = direction;
    tape->samples.resize(static_cast<std::size_t>(sampling.samples));
  }

  RenderResult out;
  double transmittance = 1.0;
  for (int i = 0; i < sampling.samples; ++i) {
    const double u = jitter.empty() ? 0.5 : jitter[static_cast<std::size_t>(i)];
    const double t = sampling.near + (i + u) * bin;
    const Vec3 x = origin + t * direction;
    SceneField::Stencil st;
    const bool inside = field.stencil(x, st);
    double sigma = 0.0;
    Vec3 color = Vec3::Zero();
    std::array<double, 4> raw{};
    if (inside) {
      raw = field.interpolate(st);
      sigma = softplus(raw[0]);
      color = Vec3(sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3]));
    }
    const double alpha = -std::expm1(-sigma * bin);
    const double w = transmittance * alpha;
    out.color += w * color;
    out.accumulation += w;
    if (tape) {
      auto& s = tape->samples[static_cast<std::size_t>(i)];
      s.t = t;
      s.delta = bin;
      s.inside = inside;
      s.stencil = st;
      s.raw = raw;
      s.sigma = sigma;
      s.color = color;
      s.weight = w;
    }
    transmittance *= 1.0 - alpha;
  }
  if (tape) tape->final_transmittance = transmittance;
  return out;
}

void volume_render_backward(const SceneField& field, const RenderTape& tape,
                            const Vec3& grad_color, double grad_accumulation,
                            std::span<double> grad, RayGradient* ray_grad) {
  if (!tape.recorded) throw StateError("backward called without a recorded forward pass");
  if (grad.size() != field.params().size()) {
    throw ArgumentError("backward: gradient buffer does not match the field");
  }
  if (ray_grad) *ray_grad = RayGradient{};

  // dC/dtau_i = T_{i+1} c_i - sum_{k>i} w_k c_k ;  dA/dtau_i = T_N.
  const std::size_t n = tape.samples.size();
  Vec3 suffix = Vec3::Zero();
  double t_next = tape.final_transmittance;  // T_{i+1}, walking backward
  for (std::size_t k = n; k-- > 0;) {
    const auto& s = tape.samples[k];
    const double t_here = t_next + s.weight;  // T_i = T_{i+1} + w_i
    if (s.inside) {
      const double d_tau = grad_color.dot(t_next * s.color - suffix) +
                           grad_accumulation * tape.final_transmittance;
      std::array<double, 4> g{};
      g[0] = d_tau * s.delta * sigmoid(s.raw[0]);
      for (int c = 0; c < 3; ++c) {
        const double a = s.color[c];
        g[c + 1] = grad_color[c] * s.weight * a * (1.0 - a);
      }
      field.scatter(s.stencil, g, grad);
      if (ray_grad) {
        const Vec3 dx = field.spatial_gradient(s.stencil, g);
        ray_grad->origin += dx;
        ray_grad->direction += s.t * dx;
      }
    }
    suffix += s.weight * s.color;
    t_next = t_here;
  }
}

}  // namespace cf
