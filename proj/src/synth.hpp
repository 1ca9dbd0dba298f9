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

// Forward simulator for eye-reflection captures. A fixed camera at the world
// origin watches a cornea that moves between frames; each cornea pixel shows
// the iris texture plus the scene seen in the mirror of the cornea.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "image.hpp"

namespace cf {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 color = Vec3::Zero();
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  Vec3 color = Vec3::Zero();
};

struct SceneSpec {
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  double ambient = 0.0;

  void validate() const;
  // Flat shading: albedo + ambient, clamped; black when nothing is hit.
  Vec3 trace(const Ray& ray) const;
};

struct IrisSpec {
  struct ControlPoint {
    double radius = 0.0;  // fraction of the disk radius
    Vec3 color = Vec3::Zero();
  };
  std::vector<ControlPoint> profile;
  double angular_amplitude = 0.0;  // relative modulation depth
  int angular_frequency = 9;       // spokes around the disk

  void validate() const;
  // Ground-truth texture at disk coordinate p = (py, px), |p| <= 1.
  Vec3 color(const Vec2& p) const;
};

struct TrajectorySpec {
  std::vector<Vec3> centers;  // cornea base centers, world mm
  std::vector<Vec3> gazes;    // apex normals; empty means "toward the camera"

  int frame_count() const { return static_cast<int>(centers.size()); }
  Vec3 gaze(int frame) const;
  void validate() const;
};

struct EvalCamera {
  Vec3 eye = Vec3::Zero();
  Vec3 target = Vec3::Zero();
};

struct SynthConfig {
  CorneaModel model;
  CameraIntrinsics camera;
  SceneSpec scene;
  IrisSpec iris;
  TrajectorySpec trajectory;
  Vec3 skin{0.62, 0.46, 0.40};
  // Held-out direct views used for evaluation.
  CameraIntrinsics eval_intrinsics{50.0, 39.5, 31.5, 80, 64};
  std::vector<EvalCamera> eval_cameras;
  std::vector<double> noise_levels{0.0, 0.05, 0.10};

  void validate() const;
  static SynthConfig defaults();
  std::vector<PinholeCamera> held_out_cameras() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct FrameRender {
  Image image;                   // full frame, 3 channels
  Image mask;                    // full frame, 1 channel, 0 or 1
  CorneaObservation observation; // exact ellipse of this frame
};

// Exact observation of a cornea placed by `pose` (weak-perspective ellipse of
// the base circle).
CorneaObservation exact_observation(const CorneaModel& model, const CameraIntrinsics& intr,
                                    const RigidTransform& pose, int frame);

FrameRender render_frame(const SceneSpec& scene, const IrisSpec& iris,
                         const CorneaModel& model, const RigidTransform& pose,
                         const CameraIntrinsics& camera, const Vec3& skin, int frame = 0);

// Direct render of the scene from an arbitrary camera.
Image render_ground_truth_view(const SceneSpec& scene, const PinholeCamera& camera);

struct DatasetSummary {
  std::string directory;
  int frames = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> exact_radii;
  std::vector<double> recorded_radii;
};

// Renders every frame and writes the dataset directory. Recorded radii are
// r_img * (1 + noise * u), u uniform in [-1, 1], one draw per frame.
DatasetSummary make_dataset(const SynthConfig& config, double noise, std::uint64_t seed,
                            const std::string& directory);

}  // namespace cf
