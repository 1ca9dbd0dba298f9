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

// On-disk dataset layout shared by the simulator and the ingestion path:
//
//   camera.json               intrinsics {focal, cx, cy, width, height}
//   observations.json         {"model": {...}, "frames": [{frame, cx, cy, r_img, ...}]}
//   frames/NNNN.png           16-bit RGB captures
//   masks/NNNN.png            8-bit binary cornea masks
//   ground_truth/             simulator-only sidecar (exact observations,
//                             scene/iris/trajectory, evaluation cameras)

#include <string>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"

namespace cf {

std::string frame_file_name(int frame);

nlohmann::json to_json(const CameraIntrinsics& c);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CorneaModel& m);
CorneaModel cornea_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j, const std::string& what);

// Ellipse record of one frame (the mask lives in its own file).
nlohmann::json observation_record(const CorneaObservation& obs);
CorneaObservation observation_from_record(const nlohmann::json& j);

nlohmann::json observations_document(const CorneaModel& model,
                                     const std::vector<CorneaObservation>& obs);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace cf
