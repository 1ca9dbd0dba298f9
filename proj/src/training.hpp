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

// Joint optimization of the scene field, the iris texture field, and one
// SE(3) correction per frame.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fields.hpp"
#include "geometry.hpp"
#include "rng.hpp"
#include "se3.hpp"

namespace cf {

enum class CompositionMode { kAdditive, kAlpha };

// Additive: clamp(texture + scene). Alpha: clamp(scene + (1 - acc) texture).
Vec3 compose(const Vec3& scene_color, double accumulation, const Vec3& texture_color,
             CompositionMode mode = CompositionMode::kAdditive);

// Mean squared error over channels and pixels.
double recon_loss(std::span<const Vec3> predicted, std::span<const Vec3> observed);

Vec2 rotate_disk(const Vec2& p, double angle);

// lambda * |Phi(p) - Phi(R p)|^2 for the rotation by `angle`.
double radial_loss(const TextureField& field, const Vec2& p, double angle, double lambda);
// Same with the angle drawn uniformly from [0, 2 pi).
double radial_loss(const TextureField& field, const Vec2& p, Rng& rng, double lambda);

struct PoseDelta {
  Twist twist = Twist::Zero();
  RigidTransform transform() const { return twist_exp(twist); }
};

// A frame's pose delta exp(twist) = [R, t] is expressed in a basis F (the
// frame's initial cornea frame, so t_z runs along the camera line of sight)
// and acts about a pivot: x <- F R F^T (x - pivot) + pivot + F t. This is the
// world-frame motion (rotation 9 row-major, translation 3).
template <typename S>
void frame_motion(const std::array<S, 6>& xi, const Mat3& frame, const Vec3& pivot,
                  std::array<S, 9>& rot, std::array<S, 3>& trans);

// Rigid action on a stored ray: O' <- M O', d' <- M_R d' (renormalized),
// n <- M_R n. With the default pivot and basis this is O' <- R O' + t.
ReflectedRay apply_pose(const PoseDelta& delta, const ReflectedRay& ray,
                        const Vec3& pivot = Vec3::Zero(), const Mat3& frame = Mat3::Identity());

// How a pose delta acts on a frame's rays. kRigid moves the stored reflected
// rays rigidly (apply_pose). kReintersect moves the cornea itself and traces
// each pixel's camera ray against it again, so the reflection point and
// normal follow the new placement.
enum class PoseModel { kRigid, kReintersect };

// Reflected ray of a camera ray `view` (from the world origin) off the full
// ellipsoid with placement rotation `rot` (row-major) and apex `center`.
// Returns false when the ray misses. Templated for forward-mode derivatives.
template <typename S>
bool reintersect_ray(const CorneaModel& model, const std::array<S, 9>& rot,
                     const std::array<S, 3>& center, const Vec3& view,
                     std::array<S, 3>& origin, std::array<S, 3>& direction);

// Ray of the same pixel after moving `placement` by the delta (basis: the
// placement's rotation).
ReflectedRay apply_pose_reintersect(const PoseDelta& delta, const ReflectedRay& ray,
                                    const CorneaModel& model, const RigidTransform& placement,
                                    const Vec3& pivot, bool* hit = nullptr);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::array<int, 3> grid_resolution{32, 32, 16};
  Aabb bbox{Vec3(-200.0, -200.0, -150.0), Vec3(200.0, 200.0, 150.0)};
  int texture_resolution = 33;
  SamplingSpec sampling{};
  int steps = 2000;
  int batch_size = 1024;
  double lr_scene = 1e-2;
  double lr_texture = 1e-2;
  double lr_pose_rotation = 1e-3;
  double lr_pose_translation = 0.1;  // mm per step scale
  double lambda_radial = 0.1;
  // Keeps each refined cornea on its observed line of sight: penalizes the
  // squared change of the unit direction camera -> base center, per frame.
  double lambda_center = 1e4;
  // Projects the twists to zero mean across frames after every pose update.
  // Jointly moving every cornea (and the scene with them) leaves the loss
  // nearly unchanged; this pins that freedom to the initial placements.
  bool pose_gauge_fix = true;
  CompositionMode composition = CompositionMode::kAdditive;
  PoseModel pose_model = PoseModel::kReintersect;
  std::uint64_t seed = 0;
  bool pose_optimization = true;
  bool texture_decomposition = true;
  double pose_warmup_fraction = 0.1;
  double init_density_raw = -8.0;
  bool use_ground_truth_poses = false;
  AdamSettings adam{};

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Reflected rays with their observed colors, ready for optimization.
struct TrainingSet {
  CorneaModel model;
  CameraIntrinsics intrinsics;
  std::vector<CorneaObservation> observations;
  std::vector<RigidTransform> poses;  // canonical -> world, one per frame
  std::vector<Vec3> pivots;           // cornea base centers, one per frame
  std::vector<ReflectedRay> rays;
  std::vector<Vec3> targets;

  int frame_count() const { return static_cast<int>(observations.size()); }
};

struct AdamBuffers {
  std::vector<double> m;
  std::vector<double> v;
};

struct TrainState {
  TrainConfig config;
  SceneField scene;
  TextureField texture;
  std::vector<PoseDelta> poses;
  std::vector<Vec3> pivots;
  // Cornea shape and initial canonical -> world placements; required by the
  // re-intersecting pose model.
  CorneaModel cornea;
  std::vector<RigidTransform> placements;
  AdamBuffers scene_moments;
  AdamBuffers texture_moments;
  AdamBuffers pose_moments;
  std::int64_t step = 0;
  Rng rng;

  static TrainState initialize(const TrainConfig& config, const std::vector<Vec3>& pivots);
  static TrainState initialize(const TrainConfig& config, const TrainingSet& data);

  // Texture as seen by the model: black when decomposition is disabled.
  Vec3 texture_color(const Vec2& p) const;
};

struct LossReport {
  std::int64_t step = 0;
  double recon = 0.0;
  double radial = 0.0;
  double center = 0.0;
  double total = 0.0;
};

struct Gradients {
  std::vector<double> scene;
  std::vector<double> texture;
  std::vector<Twist> poses;

  void reset(const TrainState& state);
};

// Everything random about one objective evaluation, drawn up front.
struct BatchNoise {
  std::vector<double> jitter;  // rays * samples
  std::vector<double> angles;  // one per ray
};

BatchNoise draw_batch_noise(Rng& rng, std::size_t rays, int samples);

// Loss of the full objective on a batch and, when grads is non-null, its
// exact gradient with respect to scene, texture, and (if want_pose) twists.
LossReport evaluate_objective(const TrainState& state, std::span<const ReflectedRay> rays,
                              std::span<const Vec3> targets, const BatchNoise& noise,
                              Gradients* grads, bool want_pose);

// One adaptive-moment update on a batch; returns the pre-update losses.
LossReport train_step(TrainState& state, std::span<const ReflectedRay> rays,
                      std::span<const Vec3> targets);

using StepCallback = std::function<void(const LossReport&)>;

// World-frame motion of one frame's current pose delta.
RigidTransform frame_motion(const TrainState& state, int frame);

// A training ray under its frame's current pose delta and the configured pose
// model. `hit` is false when the moved cornea no longer meets the pixel's ray.
ReflectedRay posed_ray(const TrainState& state, const ReflectedRay& ray, bool* hit = nullptr);

// Runs config.steps steps of batch_size rays drawn uniformly from the set.
TrainState fit(const TrainingSet& data, const TrainConfig& config,
               const StepCallback& on_step = {});
// Continues an existing state up to config.steps total steps.
void fit_continue(TrainState& state, const TrainingSet& data, const StepCallback& on_step = {});

// Masked training PSNR of the composed prediction over every training ray.
double training_psnr(const TrainState& state, const TrainingSet& data);

// Binary, versioned; round-trips bit-exactly.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace cf
