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

// Capture ingestion: rasters, iris masks, ellipse fitting, and assembly of
// reflected-ray training sets from a dataset directory.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"
#include "training.hpp"

namespace cf {

// Warnings raised while loading; printed to stderr when no sink is given.
using WarningSink = std::vector<std::string>;

// Linear [0,1] image from an 8- or 16-bit PNG. 8-bit input is accepted with
// a warning, since it discards the highlight detail reflections live in.
Image load_image_16(const std::string& path, WarningSink* warnings = nullptr);

struct EllipseFit {
  Vec2 center = Vec2::Zero();  // (x, y) pixels
  double major = 0.0;
  double minor = 0.0;
  double rotation = 0.0;       // radians in [0, pi), major axis from +x toward +y
  double residual = 0.0;       // RMS Sampson distance, pixels
};

// Direct least-squares conic fit constrained to an ellipse. Points are (x, y).
EllipseFit fit_ellipse(std::span<const Vec2> points);

// Pixels of a binary mask that are set and have an unset (or out-of-image)
// 4-neighbour, as (x, y) pixel centers.
std::vector<Vec2> mask_boundary(const Image& mask);

// Observation with r_img = major radius. The crop mask is the fitted ellipse
// interior intersected with `mask` (all of the interior when mask is empty).
CorneaObservation to_observation(const EllipseFit& fit, int frame, const Image& mask = {});

struct CaptureFrame {
  std::string image_path;
  std::string mask_path;
  std::optional<CorneaObservation> ellipse;  // pre-fit record, if any
};

struct CaptureManifest {
  CameraIntrinsics intrinsics;
  CorneaModel model;
  std::vector<CaptureFrame> frames;
  std::string ground_truth_dir;  // empty for real captures
};

// Accepts either a simulator dataset directory or a manifest.json (a path to
// the file or to a directory holding it). Manifest paths are relative to the
// manifest.
CaptureManifest load_manifest(const std::string& path);

struct LoadedCapture {
  CaptureManifest manifest;
  std::vector<Image> images;
  std::vector<CorneaObservation> observations;
};

LoadedCapture load_capture(const std::string& path, WarningSink* warnings = nullptr);

// Per-frame ground-truth placements (canonical -> world) from a simulator
// sidecar directory.
std::vector<RigidTransform> load_ground_truth_poses(const std::string& ground_truth_dir);

// Reflected rays and observed colors for every frame. Poses default to the
// placement derived from each observation.
TrainingSet make_training_set(const LoadedCapture& capture,
                              const std::vector<RigidTransform>* poses = nullptr);

}  // namespace cf
