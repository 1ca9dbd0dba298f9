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

// End-to-end commands: dataset synthesis, training, rendering, evaluation,
// and the pose-optimization ablation. Each returns a JSON report.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synth.hpp"
#include "training.hpp"

namespace cf {

struct RunOptions {
  std::string config_path;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<int> steps;
  bool no_texture = false;
  bool no_pose_opt = false;
  bool no_radial = false;
  bool ground_truth_poses = false;
  int orbit = 0;                   // render: number of orbit views
  std::optional<Vec3> eye;         // render: single view
  std::optional<Vec3> target;
  bool quiet = false;

  static RunOptions from_json(const nlohmann::json& j);
};

// Configuration file: {"synth": {...}, "train": {...}}; both sections optional.
struct ProjectConfig {
  SynthConfig synth = SynthConfig::defaults();
  TrainConfig train;
  nlohmann::json raw = nlohmann::json::object();

  static ProjectConfig load(const std::string& path);  // empty path -> defaults
  std::string hash() const;                            // FNV-1a of the effective config
};

// Applies seed/steps/ablation overrides from the command line.
TrainConfig effective_train_config(const ProjectConfig& pc, const RunOptions& opts);

struct TrainOutcome {
  TrainState state;
  TrainingSet data;
  double training_psnr = 0.0;
};

// Loads a dataset and builds its reflected rays, using the sidecar poses
// when the config asks for ground-truth placements.
TrainingSet load_training_set(const std::string& dataset, const TrainConfig& config);

// Loads a dataset, builds rays, and fits. An empty log path skips the log.
TrainOutcome train_on_dataset(const std::string& dataset, const TrainConfig& config,
                              const std::string& loss_log_path = {});

struct EvalMetrics {
  std::vector<double> ssim;
  std::vector<double> psnr;
  double ssim_mean = 0.0;
  double psnr_mean = 0.0;
  double reprojection_initial = 0.0;  // px, limbus circle vs ground truth
  double reprojection_refined = 0.0;
  double texture_rms = 0.0;           // learned texture vs ground-truth iris
  std::vector<double> frame_reprojection_initial;
  std::vector<double> frame_reprojection_refined;
  std::vector<Twist> twists;

  nlohmann::json to_json() const;
};

// Compares a trained state against a simulator sidecar. Throws a ConfigError
// explaining the situation when the dataset has no ground truth.
EvalMetrics evaluate_against_ground_truth(const TrainState& state, const std::string& dataset);

// Mean image distance (pixels) between the projected limbus curves of two
// placements, symmetric closest-point; invariant to roll about the cornea axis.
double limbus_reprojection_error(const CorneaModel& model, const CameraIntrinsics& intr,
                                 const RigidTransform& a, const RigidTransform& b);

// Placement of frame f after applying the learned pose delta about its pivot.
RigidTransform refined_pose(const TrainState& state, const RigidTransform& initial, int frame);

// RMS difference between the model's texture and a reference iris over a
// regular grid of disk points.
double texture_rms_error(const TrainState& state, const IrisSpec& iris, int grid = 41);

nlohmann::json cmd_synth(const RunOptions& opts);
nlohmann::json cmd_train(const RunOptions& opts);
nlohmann::json cmd_render(const RunOptions& opts);
nlohmann::json cmd_eval(const RunOptions& opts);
nlohmann::json cmd_ablate(const RunOptions& opts);

}  // namespace cf
