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

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace cf {

using nlohmann::json;

Vec3 compose(const Vec3& scene_color, double accumulation, const Vec3& texture_color,
             CompositionMode mode) {
  const Vec3 raw = mode == CompositionMode::kAdditive
                       ? Vec3(texture_color + scene_color)
                       : Vec3(scene_color + (1.0 - accumulation) * texture_color);
  return raw.cwiseMax(0.0).cwiseMin(1.0);
}

double recon_loss(std::span<const Vec3> predicted, std::span<const Vec3> observed) {
  if (predicted.size() != observed.size()) {
    throw ArgumentError("recon_loss: batch sizes differ");
  }
  if (predicted.empty()) throw ArgumentError("recon_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    sum += (predicted[i] - observed[i]).squaredNorm();
  }
  return sum / (3.0 * static_cast<double>(predicted.size()));
}

Vec2 rotate_disk(const Vec2& p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
}

double radial_loss(const TextureField& field, const Vec2& p, double angle, double lambda) {
  if (lambda == 0.0) return 0.0;
  return lambda * (field.eval(p) - field.eval(rotate_disk(p, angle))).squaredNorm();
}

double radial_loss(const TextureField& field, const Vec2& p, Rng& rng, double lambda) {
  return radial_loss(field, p, rng.uniform(0.0, 2.0 * M_PI), lambda);
}

template <typename S>
void frame_motion(const std::array<S, 6>& xi, const Mat3& frame, const Vec3& pivot,
                  std::array<S, 9>& rot, std::array<S, 3>& trans) {
  std::array<S, 9> r;
  std::array<S, 3> t;
  se3_exp(xi, r, t);
  // rot = F R F^T, trans = pivot + F t - rot pivot.
  std::array<S, 9> fr;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      S acc(0.0);
      for (int m = 0; m < 3; ++m) acc = acc + S(frame(i, m)) * r[m * 3 + j];
      fr[i * 3 + j] = acc;
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      S acc(0.0);
      for (int m = 0; m < 3; ++m) acc = acc + fr[i * 3 + m] * S(frame(j, m));
      rot[i * 3 + j] = acc;
    }
  }
  for (int i = 0; i < 3; ++i) {
    S acc = S(pivot[i]);
    for (int m = 0; m < 3; ++m) acc = acc + S(frame(i, m)) * t[m] - rot[i * 3 + m] * S(pivot[m]);
    trans[i] = acc;
  }
}

template void frame_motion<double>(const std::array<double, 6>&, const Mat3&, const Vec3&,
                                   std::array<double, 9>&, std::array<double, 3>&);
template void frame_motion<Dual<6>>(const std::array<Dual<6>, 6>&, const Mat3&, const Vec3&,
                                    std::array<Dual<6>, 9>&, std::array<Dual<6>, 3>&);

namespace {

RigidTransform motion_transform(const PoseDelta& delta, const Mat3& frame, const Vec3& pivot) {
  std::array<double, 6> xi;
  for (int k = 0; k < 6; ++k) xi[k] = delta.twist[k];
  std::array<double, 9> rot;
  std::array<double, 3> trans;
  frame_motion(xi, frame, pivot, rot, trans);
  RigidTransform m;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m.rotation(i, j) = rot[i * 3 + j];
    m.translation[i] = trans[i];
  }
  return m;
}

template <typename S>
void mat_vec(const std::array<S, 9>& m, const Vec3& v, std::array<S, 3>& out) {
  for (int i = 0; i < 3; ++i) {
    out[i] = m[i * 3] * S(v[0]) + m[i * 3 + 1] * S(v[1]) + m[i * 3 + 2] * S(v[2]);
  }
}

// Placement moved by a world motion: rotation M_R Q, center M_R c + M_t.
template <typename S>
void moved_placement(const std::array<S, 9>& mr, const std::array<S, 3>& mt,
                     const RigidTransform& placement, std::array<S, 9>& rot,
                     std::array<S, 3>& center) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      S acc(0.0);
      for (int m = 0; m < 3; ++m) acc = acc + mr[i * 3 + m] * S(placement.rotation(m, j));
      rot[i * 3 + j] = acc;
    }
  }
  mat_vec(mr, placement.translation, center);
  for (int i = 0; i < 3; ++i) center[i] = center[i] + mt[i];
}

// Squared change of the unit direction toward the pivot under a motion.
template <typename S>
S center_error(const std::array<S, 9>& rot, const std::array<S, 3>& trans, const Vec3& pivot) {
  using std::sqrt;
  std::array<S, 3> q;
  mat_vec(rot, pivot, q);
  for (int a = 0; a < 3; ++a) q[a] = q[a] + trans[a];
  const S qn = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
  const double pn = pivot.norm();
  S e(0.0);
  for (int a = 0; a < 3; ++a) {
    const S diff = q[a] / qn - S(pivot[a] / pn);
    e = e + diff * diff;
  }
  return e;
}

}  // namespace

ReflectedRay apply_pose(const PoseDelta& delta, const ReflectedRay& ray, const Vec3& pivot,
                        const Mat3& frame) {
  const RigidTransform m = motion_transform(delta, frame, pivot);
  ReflectedRay out = ray;
  out.origin = m.rotation * ray.origin + m.translation;
  out.direction = (m.rotation * ray.direction).normalized();
  out.normal = (m.rotation * ray.normal).normalized();
  return out;
}

template <typename S>
bool reintersect_ray(const CorneaModel& model, const std::array<S, 9>& rot,
                     const std::array<S, 3>& center, const Vec3& view,
                     std::array<S, 3>& origin, std::array<S, 3>& direction) {
  using std::sqrt;
  // Camera origin and ray direction in the canonical frame: o = -Q^T c, v = Q^T d.
  std::array<S, 3> o, v;
  for (int a = 0; a < 3; ++a) {
    S oa(0.0), va(0.0);
    for (int r = 0; r < 3; ++r) {
      oa = oa - rot[r * 3 + a] * center[r];
      va = va + rot[r * 3 + a] * S(view[r]);
    }
    o[a] = oa;
    v[a] = va;
  }
  const S k(1.0 - model.eccentricity);
  const S R(model.apex_radius);
  // F(x) = k z^2 - 2 R z + x^2 + y^2; solve F(o + s v) = 0 as a s^2 + 2 h s + c.
  const S a = k * v[2] * v[2] + v[0] * v[0] + v[1] * v[1];
  const S h = k * o[2] * v[2] - R * v[2] + o[0] * v[0] + o[1] * v[1];
  const S c = k * o[2] * o[2] - S(2.0) * R * o[2] + o[0] * o[0] + o[1] * o[1];
  const S disc = h * h - a * c;
  if (!(value_of(disc) > 0.0) || !(value_of(h) < 0.0) || !(value_of(c) > 0.0)) return false;
  const S s = c / (sqrt(disc) - h);  // nearer root
  std::array<S, 3> x;
  for (int i = 0; i < 3; ++i) x[i] = o[i] + s * v[i];
  std::array<S, 3> n{x[0], x[1], k * x[2] - R};
  const S nn = sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  std::array<S, 3> nw;
  for (int r = 0; r < 3; ++r) {
    nw[r] = (rot[r * 3] * n[0] + rot[r * 3 + 1] * n[1] + rot[r * 3 + 2] * n[2]) / nn;
  }
  const S dn = nw[0] * S(view[0]) + nw[1] * S(view[1]) + nw[2] * S(view[2]);
  if (!(value_of(dn) < 0.0)) return false;
  for (int r = 0; r < 3; ++r) {
    origin[r] = s * S(view[r]);  // the camera sits at the world origin
    direction[r] = S(view[r]) - S(2.0) * dn * nw[r];
  }
  return true;
}

template bool reintersect_ray<double>(const CorneaModel&, const std::array<double, 9>&,
                                      const std::array<double, 3>&, const Vec3&,
                                      std::array<double, 3>&, std::array<double, 3>&);
template bool reintersect_ray<Dual<6>>(const CorneaModel&, const std::array<Dual<6>, 9>&,
                                       const std::array<Dual<6>, 3>&, const Vec3&,
                                       std::array<Dual<6>, 3>&, std::array<Dual<6>, 3>&);

ReflectedRay apply_pose_reintersect(const PoseDelta& delta, const ReflectedRay& ray,
                                    const CorneaModel& model, const RigidTransform& placement,
                                    const Vec3& pivot, bool* hit) {
  std::array<double, 6> xi;
  for (int k = 0; k < 6; ++k) xi[k] = delta.twist[k];
  std::array<double, 9> mr, rot;
  std::array<double, 3> mt, center, o, d;
  frame_motion(xi, placement.rotation, pivot, mr, mt);
  moved_placement(mr, mt, placement, rot, center);
  ReflectedRay out = ray;
  const bool ok = reintersect_ray(model, rot, center, ray.view, o, d);
  if (hit) *hit = ok;
  if (!ok) return out;
  out.origin = Vec3(o[0], o[1], o[2]);
  out.direction = Vec3(d[0], d[1], d[2]);
  out.normal = (out.direction - ray.view).normalized();
  return out;
}

RigidTransform frame_motion(const TrainState& state, int frame) {
  const std::size_t f = static_cast<std::size_t>(frame);
  if (f >= state.poses.size()) throw ArgumentError("frame index has no pose");
  const Mat3 basis =
      state.placements.empty() ? Mat3::Identity() : Mat3(state.placements[f].rotation);
  return motion_transform(state.poses[f], basis, state.pivots[f]);
}

ReflectedRay posed_ray(const TrainState& state, const ReflectedRay& ray, bool* hit) {
  const std::size_t f = static_cast<std::size_t>(ray.frame);
  if (ray.frame < 0 || f >= state.poses.size()) throw ArgumentError("ray frame index has no pose");
  if (hit) *hit = true;
  if (state.config.pose_model == PoseModel::kReintersect) {
    if (state.placements.size() != state.poses.size()) {
      throw StateError("re-intersecting pose model needs the initial cornea placements");
    }
    return apply_pose_reintersect(state.poses[f], ray, state.cornea, state.placements[f],
                                  state.pivots[f], hit);
  }
  const Mat3 basis =
      state.placements.empty() ? Mat3::Identity() : Mat3(state.placements[f].rotation);
  return apply_pose(state.poses[f], ray, state.pivots[f], basis);
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string composition_name(CompositionMode m) {
  return m == CompositionMode::kAdditive ? "additive" : "alpha";
}

std::string pose_model_name(PoseModel m) {
  return m == PoseModel::kRigid ? "rigid" : "reintersect";
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(std::string(what) + " must be a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void TrainConfig::validate() const {
  for (int r : grid_resolution) {
    if (r < 2) throw ConfigError("grid_resolution entries must be >= 2");
  }
  if (!((bbox.hi.array() > bbox.lo.array()).all())) {
    throw ConfigError("bbox max must exceed min on every axis");
  }
  if (texture_resolution < 2) throw ConfigError("texture_resolution must be >= 2");
  if (!(sampling.near >= 0.0) || !(sampling.far > sampling.near) || sampling.samples < 1) {
    throw ConfigError("sampling needs 0 <= near < far and samples >= 1");
  }
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  for (double v : {lr_scene, lr_texture, lr_pose_rotation, lr_pose_translation,
                   lambda_radial, lambda_center, pose_warmup_fraction}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("learning rates, lambda_radial, and warmup must be non-negative");
    }
  }
  if (pose_warmup_fraction > 1.0) throw ConfigError("pose_warmup_fraction must be <= 1");
}

std::string TrainConfig::to_json() const {
  json j;
  j["grid_resolution"] = grid_resolution;
  j["bbox"] = {{"min", vec_json(bbox.lo)}, {"max", vec_json(bbox.hi)}};
  j["texture_resolution"] = texture_resolution;
  j["near"] = sampling.near;
  j["far"] = sampling.far;
  j["samples"] = sampling.samples;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["lr_scene"] = lr_scene;
  j["lr_texture"] = lr_texture;
  j["lr_pose_rotation"] = lr_pose_rotation;
  j["lr_pose_translation"] = lr_pose_translation;
  j["lambda_radial"] = lambda_radial;
  j["lambda_center"] = lambda_center;
  j["pose_gauge_fix"] = pose_gauge_fix;
  j["composition"] = composition_name(composition);
  j["pose_model"] = pose_model_name(pose_model);
  j["seed"] = seed;
  j["pose_optimization"] = pose_optimization;
  j["texture_decomposition"] = texture_decomposition;
  j["pose_warmup_fraction"] = pose_warmup_fraction;
  j["init_density_raw"] = init_density_raw;
  j["use_ground_truth_poses"] = use_ground_truth_poses;
  j["adam"] = {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const char* kKnown[] = {
      "grid_resolution", "bbox", "texture_resolution", "near", "far", "samples",
      "steps", "batch_size", "lr_scene", "lr_texture", "lr_pose_rotation",
      "lr_pose_translation", "lambda_radial", "lambda_center", "pose_gauge_fix", "composition", "pose_model", "seed",
      "pose_optimization", "texture_decomposition", "pose_warmup_fraction",
      "init_density_raw", "use_ground_truth_poses", "adam"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown),
                     [&](const char* k) { return key == k; }) == std::end(kKnown)) {
      throw ConfigError("unknown training config key '" + key + "'");
    }
  }
  try {
    if (j.contains("grid_resolution")) c.grid_resolution = j["grid_resolution"].get<std::array<int, 3>>();
    if (j.contains("bbox")) {
      c.bbox.lo = vec_from(j["bbox"].at("min"), "bbox.min");
      c.bbox.hi = vec_from(j["bbox"].at("max"), "bbox.max");
    }
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j[key].get<std::decay_t<decltype(out)>>();
    };
    get("texture_resolution", c.texture_resolution);
    get("near", c.sampling.near);
    get("far", c.sampling.far);
    get("samples", c.sampling.samples);
    get("steps", c.steps);
    get("batch_size", c.batch_size);
    get("lr_scene", c.lr_scene);
    get("lr_texture", c.lr_texture);
    get("lr_pose_rotation", c.lr_pose_rotation);
    get("lr_pose_translation", c.lr_pose_translation);
    get("lambda_radial", c.lambda_radial);
    get("lambda_center", c.lambda_center);
    get("pose_gauge_fix", c.pose_gauge_fix);
    get("seed", c.seed);
    get("pose_optimization", c.pose_optimization);
    get("texture_decomposition", c.texture_decomposition);
    get("pose_warmup_fraction", c.pose_warmup_fraction);
    get("init_density_raw", c.init_density_raw);
    get("use_ground_truth_poses", c.use_ground_truth_poses);
    if (j.contains("composition")) {
      const auto name = j["composition"].get<std::string>();
      if (name == "additive") {
        c.composition = CompositionMode::kAdditive;
      } else if (name == "alpha") {
        c.composition = CompositionMode::kAlpha;
      } else {
        throw ConfigError("composition must be 'additive' or 'alpha'");
      }
    }
    if (j.contains("pose_model")) {
      const auto name = j["pose_model"].get<std::string>();
      if (name == "rigid") {
        c.pose_model = PoseModel::kRigid;
      } else if (name == "reintersect") {
        c.pose_model = PoseModel::kReintersect;
      } else {
        throw ConfigError("pose_model must be 'rigid' or 'reintersect'");
      }
    }
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      if (a.contains("beta1")) c.adam.beta1 = a["beta1"].get<double>();
      if (a.contains("beta2")) c.adam.beta2 = a["beta2"].get<double>();
      if (a.contains("epsilon")) c.adam.epsilon = a["epsilon"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// State

TrainState TrainState::initialize(const TrainConfig& config, const std::vector<Vec3>& pivots) {
  config.validate();
  TrainState s;
  s.config = config;
  s.scene = SceneField(config.bbox, config.grid_resolution, config.init_density_raw, 0.0);
  s.texture = TextureField(config.texture_resolution, 0.0);
  s.poses.assign(pivots.size(), PoseDelta{});
  s.pivots = pivots;
  s.scene_moments = {std::vector<double>(s.scene.params().size(), 0.0),
                     std::vector<double>(s.scene.params().size(), 0.0)};
  s.texture_moments = {std::vector<double>(s.texture.params().size(), 0.0),
                       std::vector<double>(s.texture.params().size(), 0.0)};
  s.pose_moments = {std::vector<double>(pivots.size() * 6, 0.0),
                    std::vector<double>(pivots.size() * 6, 0.0)};
  s.rng = Rng(config.seed);
  return s;
}

TrainState TrainState::initialize(const TrainConfig& config, const TrainingSet& data) {
  if (data.poses.size() != data.pivots.size()) {
    throw ArgumentError("training set needs one placement per pivot");
  }
  TrainState s = initialize(config, data.pivots);
  s.cornea = data.model;
  s.placements = data.poses;
  return s;
}

Vec3 TrainState::texture_color(const Vec2& p) const {
  if (!config.texture_decomposition) return Vec3::Zero();
  return texture.eval(p);
}

void Gradients::reset(const TrainState& state) {
  scene.assign(state.scene.params().size(), 0.0);
  texture.assign(state.texture.params().size(), 0.0);
  poses.assign(state.poses.size(), Twist::Zero());
}

BatchNoise draw_batch_noise(Rng& rng, std::size_t rays, int samples) {
  BatchNoise n;
  n.jitter.resize(rays * static_cast<std::size_t>(samples));
  for (double& u : n.jitter) u = rng.uniform();
  n.angles.resize(rays);
  for (double& a : n.angles) a = rng.uniform(0.0, 2.0 * M_PI);
  return n;
}

LossReport evaluate_objective(const TrainState& state, std::span<const ReflectedRay> rays,
                              std::span<const Vec3> targets, const BatchNoise& noise,
                              Gradients* grads, bool want_pose) {
  const std::size_t n = rays.size();
  if (n == 0 || targets.size() != n) {
    throw ArgumentError("objective needs a nonempty batch with one target per ray");
  }
  const int samples = state.config.sampling.samples;
  if (noise.jitter.size() != n * samples || noise.angles.size() != n) {
    throw ArgumentError("batch noise does not match the batch");
  }
  const bool texture_on = state.config.texture_decomposition;
  const double lambda = texture_on ? state.config.lambda_radial : 0.0;
  const CompositionMode mode = state.config.composition;
  const bool reintersect = state.config.pose_model == PoseModel::kReintersect;
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t frames = state.poses.size();
  if (state.pivots.size() != frames) throw StateError("state needs one pivot per pose");
  if (reintersect && state.placements.size() != frames) {
    throw StateError("re-intersecting pose model needs the initial cornea placements");
  }

  // Per-frame world motions, carrying derivatives with respect to the
  // frame's twist when pose gradients are wanted.
  using D = Dual<6>;
  const bool dual = grads != nullptr && want_pose;
  std::vector<std::array<D, 9>> rot_d;
  std::vector<std::array<D, 3>> trans_d;
  std::vector<std::array<double, 9>> rot_v(frames);
  std::vector<std::array<double, 3>> trans_v(frames);
  if (dual) {
    rot_d.resize(frames);
    trans_d.resize(frames);
  }
  for (std::size_t f = 0; f < frames; ++f) {
    const Mat3 basis = state.placements.empty() ? Mat3::Identity()
                                                : Mat3(state.placements[f].rotation);
    std::array<double, 6> xi;
    for (int k = 0; k < 6; ++k) xi[k] = state.poses[f].twist[k];
    frame_motion(xi, basis, state.pivots[f], rot_v[f], trans_v[f]);
    if (dual) {
      std::array<D, 6> xd;
      for (int k = 0; k < 6; ++k) {
        xd[k] = D(xi[k]);
        xd[k].d[k] = 1.0;
      }
      frame_motion(xd, basis, state.pivots[f], rot_d[f], trans_d[f]);
    }
  }
  // Moved placements for the re-intersecting model.
  std::vector<std::array<D, 9>> place_rot_d;
  std::vector<std::array<D, 3>> place_center_d;
  std::vector<std::array<double, 9>> place_rot_v;
  std::vector<std::array<double, 3>> place_center_v;
  if (reintersect) {
    place_rot_v.resize(frames);
    place_center_v.resize(frames);
    if (dual) {
      place_rot_d.resize(frames);
      place_center_d.resize(frames);
    }
    for (std::size_t f = 0; f < frames; ++f) {
      moved_placement(rot_v[f], trans_v[f], state.placements[f], place_rot_v[f],
                      place_center_v[f]);
      if (dual) {
        moved_placement(rot_d[f], trans_d[f], state.placements[f], place_rot_d[f],
                        place_center_d[f]);
      }
    }
  }

  LossReport report;
  report.step = state.step;
  RenderTape tape;
  double recon_sum = 0.0;
  double radial_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ReflectedRay& ray = rays[i];
    if (ray.frame < 0 || static_cast<std::size_t>(ray.frame) >= frames) {
      throw ArgumentError("ray frame index has no pose");
    }
    const std::size_t f = static_cast<std::size_t>(ray.frame);
    std::array<D, 3> origin_d, direction_d;
    std::array<double, 3> o, d;
    bool hit = true;
    if (dual) {
      if (reintersect) {
        hit = reintersect_ray(state.cornea, place_rot_d[f], place_center_d[f], ray.view,
                              origin_d, direction_d);
      } else {
        mat_vec(rot_d[f], ray.origin, origin_d);
        mat_vec(rot_d[f], ray.direction, direction_d);
        for (int a = 0; a < 3; ++a) origin_d[a] = origin_d[a] + trans_d[f][a];
      }
      for (int a = 0; a < 3; ++a) {
        o[a] = origin_d[a].v;
        d[a] = direction_d[a].v;
      }
    } else if (reintersect) {
      hit = reintersect_ray(state.cornea, place_rot_v[f], place_center_v[f], ray.view, o, d);
    } else {
      mat_vec(rot_v[f], ray.origin, o);
      mat_vec(rot_v[f], ray.direction, d);
      for (int a = 0; a < 3; ++a) o[a] += trans_v[f][a];
    }
    const Vec3 origin(o[0], o[1], o[2]);
    const Vec3 direction(d[0], d[1], d[2]);

    const std::span<const double> jitter(noise.jitter.data() + i * samples, samples);
    // A camera ray that no longer meets the moved cornea reflects nothing.
    const RenderResult rr =
        hit ? volume_render(state.scene, origin, direction, state.config.sampling, jitter,
                            grads ? &tape : nullptr)
            : RenderResult{};
    const Vec3 tex = texture_on ? state.texture.eval(ray.disk) : Vec3(Vec3::Zero());
    const Vec3 raw = mode == CompositionMode::kAdditive
                         ? Vec3(tex + rr.color)
                         : Vec3(rr.color + (1.0 - rr.accumulation) * tex);
    const Vec3 pred = raw.cwiseMax(0.0).cwiseMin(1.0);
    const Vec3 err = pred - targets[i];
    recon_sum += err.squaredNorm();

    Vec2 rotated;
    Vec3 radial_diff = Vec3::Zero();
    if (lambda > 0.0) {
      rotated = rotate_disk(ray.disk, noise.angles[i]);
      radial_diff = tex - state.texture.eval(rotated);
      radial_sum += lambda * radial_diff.squaredNorm();
    }

    if (!grads) continue;
    Vec3 g_pred = (2.0 / 3.0) * inv_n * err;
    for (int c = 0; c < 3; ++c) {
      if (raw[c] < 0.0 || raw[c] > 1.0) g_pred[c] = 0.0;
    }
    Vec3 g_tex = g_pred;
    double g_acc = 0.0;
    if (mode == CompositionMode::kAlpha) {
      g_acc = -g_pred.dot(tex);
      g_tex = (1.0 - rr.accumulation) * g_pred;
    }
    RayGradient rg;
    if (hit) {
      volume_render_backward(state.scene, tape, g_pred, g_acc, grads->scene,
                             dual ? &rg : nullptr);
    }
    if (texture_on) {
      Vec3 g_radial = Vec3::Zero();
      if (lambda > 0.0) {
        g_radial = 2.0 * lambda * inv_n * radial_diff;
        state.texture.backward(rotated, -g_radial, grads->texture);
      }
      state.texture.backward(ray.disk, g_tex + g_radial, grads->texture);
    }
    if (dual && hit) {
      Twist& gp = grads->poses[f];
      for (int k = 0; k < 6; ++k) {
        for (int a = 0; a < 3; ++a) {
          gp[k] += rg.origin[a] * origin_d[a].d[k] + rg.direction[a] * direction_d[a].d[k];
        }
      }
    }
  }

  report.recon = recon_sum / (3.0 * static_cast<double>(n));
  report.radial = radial_sum * inv_n;

  // Line-of-sight prior: the refined base center M(pivot) should stay on the
  // camera ray through the observed center.
  const double lambda_c = state.config.lambda_center;
  if (lambda_c > 0.0 && frames > 0) {
    const double w = lambda_c / static_cast<double>(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      const Vec3& p = state.pivots[f];
      if (!(p.norm() > 0.0)) continue;
      if (dual) {
        const D e = center_error(rot_d[f], trans_d[f], p);
        report.center += w * e.v;
        for (int k = 0; k < 6; ++k) grads->poses[f][k] += w * e.d[k];
      } else {
        report.center += w * center_error(rot_v[f], trans_v[f], p);
      }
    }
  }
  report.total = report.recon + report.radial + report.center;
  if (!std::isfinite(report.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step << " (recon=" << report.recon
       << ", radial=" << report.radial << ", center=" << report.center << ", batch=" << n
       << ")";
    std::size_t bad = 0;
    for (double v : state.scene.params()) bad += !std::isfinite(v);
    os << "; non-finite scene parameters: " << bad;
    bad = 0;
    for (double v : state.texture.params()) bad += !std::isfinite(v);
    os << "; non-finite texture parameters: " << bad;
    throw NumericError(os.str());
  }
  return report;
}

namespace {

void adam_update(std::span<double> params, std::span<const double> grad, AdamBuffers& buf,
                 double lr, std::int64_t t, const AdamSettings& s) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    buf.m[i] = s.beta1 * buf.m[i] + (1.0 - s.beta1) * g;
    buf.v[i] = s.beta2 * buf.v[i] + (1.0 - s.beta2) * g * g;
    params[i] -= lr * (buf.m[i] / c1) / (std::sqrt(buf.v[i] / c2) + s.epsilon);
  }
}

std::int64_t warmup_steps(const TrainConfig& c) {
  return static_cast<std::int64_t>(std::floor(c.pose_warmup_fraction * c.steps));
}

}  // namespace

LossReport train_step(TrainState& state, std::span<const ReflectedRay> rays,
                      std::span<const Vec3> targets) {
  if (rays.empty()) throw ArgumentError("train_step: empty batch");
  const TrainConfig& c = state.config;
  const bool pose_active = c.pose_optimization &&
                           (c.lr_pose_rotation > 0.0 || c.lr_pose_translation > 0.0) &&
                           state.step >= warmup_steps(c) && !state.poses.empty();
  const BatchNoise noise = draw_batch_noise(state.rng, rays.size(), c.sampling.samples);
  Gradients g;
  g.reset(state);
  const LossReport report = evaluate_objective(state, rays, targets, noise, &g, pose_active);

  const std::int64_t t = state.step + 1;
  if (c.lr_scene > 0.0) {
    adam_update(state.scene.params(), g.scene, state.scene_moments, c.lr_scene, t, c.adam);
  }
  if (c.texture_decomposition && c.lr_texture > 0.0) {
    adam_update(state.texture.params(), g.texture, state.texture_moments, c.lr_texture, t,
                c.adam);
  }
  if (pose_active) {
    // Pose moments start at the end of warmup; bias-correct from there.
    const std::int64_t tp = state.step - warmup_steps(c) + 1;
    for (std::size_t f = 0; f < state.poses.size(); ++f) {
      for (int k = 0; k < 6; ++k) {
        const double lr = k < 3 ? c.lr_pose_rotation : c.lr_pose_translation;
        if (lr == 0.0) continue;
        const std::size_t i = f * 6 + k;
        AdamBuffers one{{state.pose_moments.m[i]}, {state.pose_moments.v[i]}};
        double param = state.poses[f].twist[k];
        const double grad = g.poses[f][k];
        adam_update(std::span<double>(&param, 1), std::span<const double>(&grad, 1), one, lr,
                    tp, c.adam);
        state.poses[f].twist[k] = param;
        state.pose_moments.m[i] = one.m[0];
        state.pose_moments.v[i] = one.v[0];
      }
    }
    if (c.pose_gauge_fix && state.poses.size() > 1) {
      Twist mean = Twist::Zero();
      for (const PoseDelta& p : state.poses) mean += p.twist;
      mean /= static_cast<double>(state.poses.size());
      for (std::size_t k = 0; k < 6; ++k) {
        const double lr = k < 3 ? c.lr_pose_rotation : c.lr_pose_translation;
        if (lr == 0.0) mean[k] = 0.0;
      }
      for (PoseDelta& p : state.poses) p.twist -= mean;
    }
  }
  state.step = t;
  return report;
}

void fit_continue(TrainState& state, const TrainingSet& data, const StepCallback& on_step) {
  if (data.frame_count() < 2) {
    throw ArgumentError(
        "training needs at least two frames: the scene is only constrained by reflections "
        "seen from several eye positions");
  }
  if (data.rays.empty()) throw ArgumentError("training set contains no cornea rays");
  if (static_cast<int>(state.poses.size()) != data.frame_count()) {
    throw ArgumentError("training state and data disagree on the frame count");
  }
  const std::size_t batch =
      std::min<std::size_t>(static_cast<std::size_t>(state.config.batch_size), data.rays.size());
  std::vector<ReflectedRay> rays(batch);
  std::vector<Vec3> targets(batch);
  while (state.step < state.config.steps) {
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t k = state.rng.below(data.rays.size());
      rays[i] = data.rays[k];
      targets[i] = data.targets[k];
    }
    const LossReport r = train_step(state, rays, targets);
    if (on_step) on_step(r);
  }
}

TrainState fit(const TrainingSet& data, const TrainConfig& config, const StepCallback& on_step) {
  if (data.frame_count() < 2) {
    throw ArgumentError(
        "training needs at least two frames: the scene is only constrained by reflections "
        "seen from several eye positions");
  }
  TrainState state = TrainState::initialize(config, data);
  fit_continue(state, data, on_step);
  return state;
}

double training_psnr(const TrainState& state, const TrainingSet& data) {
  if (data.rays.empty()) throw ArgumentError("training_psnr: no rays");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.rays.size(); ++i) {
    const ReflectedRay& ray = data.rays[i];
    bool hit = true;
    const ReflectedRay posed = posed_ray(state, ray, &hit);
    const RenderResult rr =
        hit ? volume_render(state.scene, posed.origin, posed.direction, state.config.sampling)
            : RenderResult{};
    const Vec3 pred = compose(rr.color, rr.accumulation, state.texture_color(ray.disk),
                              state.config.composition);
    sum += (pred - data.targets[i]).squaredNorm();
  }
  const double mse = sum / (3.0 * static_cast<double>(data.rays.size()));
  if (mse <= 1e-10) return 100.0;
  return -10.0 * std::log10(mse);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::vector<double> doubles(std::size_t expected) {
    const auto n = pod<std::uint64_t>();
    if (n != expected) fail("array length mismatch");
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }
  std::string string() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) fail("implausible string length");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  [[noreturn]] void fail(const std::string& why) {
    throw IoError("corrupt checkpoint '" + path_ + "': " + why);
  }

 private:
  void check() {
    if (!is_) fail("unexpected end of file");
  }
  std::istream& is_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint '" + path + "' for writing");
  Writer w(os);
  os.write(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  w.string(state.config.to_json());
  for (int r : state.scene.resolution()) w.pod<std::int32_t>(r);
  for (int a = 0; a < 3; ++a) w.pod(state.scene.box().lo[a]);
  for (int a = 0; a < 3; ++a) w.pod(state.scene.box().hi[a]);
  w.doubles(state.scene.params());
  w.pod<std::int32_t>(state.texture.resolution());
  w.doubles(state.texture.params());
  w.pod<std::uint64_t>(state.poses.size());
  for (std::size_t f = 0; f < state.poses.size(); ++f) {
    for (int k = 0; k < 6; ++k) w.pod(state.poses[f].twist[k]);
    for (int a = 0; a < 3; ++a) w.pod(state.pivots[f][a]);
  }
  w.pod(state.cornea.eccentricity);
  w.pod(state.cornea.apex_radius);
  w.pod(state.cornea.base_radius);
  w.pod<std::uint8_t>(state.placements.empty() ? 0 : 1);
  if (!state.placements.empty()) {
    if (state.placements.size() != state.poses.size()) {
      throw StateError("placements and poses disagree on the frame count");
    }
    for (const RigidTransform& t : state.placements) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) w.pod(t.rotation(r, c));
      }
      for (int a = 0; a < 3; ++a) w.pod(t.translation[a]);
    }
  }
  for (const AdamBuffers* b : {&state.scene_moments, &state.texture_moments, &state.pose_moments}) {
    w.doubles(b->m);
    w.doubles(b->v);
  }
  w.pod(state.step);
  w.string(state.rng.state());
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  Reader r(is, path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("bad magic");
  if (r.pod<std::uint32_t>() != kVersion) r.fail("unsupported version");

  TrainState s;
  try {
    s.config = TrainConfig::from_json(r.string());
  } catch (const Error& e) {
    r.fail(std::string("embedded config: ") + e.what());
  }
  std::array<int, 3> res;
  for (int& v : res) v = r.pod<std::int32_t>();
  Aabb box;
  for (int a = 0; a < 3; ++a) box.lo[a] = r.pod<double>();
  for (int a = 0; a < 3; ++a) box.hi[a] = r.pod<double>();
  if (res != s.config.grid_resolution) r.fail("grid resolution disagrees with config");
  try {
    s.scene = SceneField(box, res);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  s.scene.params() = r.doubles(s.scene.params().size());
  const int tex_res = r.pod<std::int32_t>();
  if (tex_res < 2 || tex_res > 4096) r.fail("bad texture resolution");
  s.texture = TextureField(tex_res);
  s.texture.params() = r.doubles(s.texture.params().size());
  const auto frames = r.pod<std::uint64_t>();
  if (frames > 100000) r.fail("implausible frame count");
  s.poses.resize(frames);
  s.pivots.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (int k = 0; k < 6; ++k) s.poses[f].twist[k] = r.pod<double>();
    for (int a = 0; a < 3; ++a) s.pivots[f][a] = r.pod<double>();
  }
  s.cornea.eccentricity = r.pod<double>();
  s.cornea.apex_radius = r.pod<double>();
  s.cornea.base_radius = r.pod<double>();
  const auto has_placements = r.pod<std::uint8_t>();
  if (has_placements > 1) r.fail("bad placement flag");
  if (has_placements) {
    s.placements.resize(frames);
    for (RigidTransform& t : s.placements) {
      for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) t.rotation(i, c) = r.pod<double>();
      }
      for (int a = 0; a < 3; ++a) t.translation[a] = r.pod<double>();
    }
  }
  s.scene_moments.m = r.doubles(s.scene.params().size());
  s.scene_moments.v = r.doubles(s.scene.params().size());
  s.texture_moments.m = r.doubles(s.texture.params().size());
  s.texture_moments.v = r.doubles(s.texture.params().size());
  s.pose_moments.m = r.doubles(frames * 6);
  s.pose_moments.v = r.doubles(frames * 6);
  s.step = r.pod<std::int64_t>();
  s.rng.set_state(r.string());
  return s;
}

}  // namespace cf
