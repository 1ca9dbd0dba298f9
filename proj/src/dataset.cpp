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

#include "dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace cf {

using nlohmann::json;

std::string frame_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.png", frame);
  return buf;
}

json to_json(const CameraIntrinsics& c) {
  return {{"focal", c.focal}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width},
          {"height", c.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics c;
  try {
    c.focal = j.at("focal").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad camera intrinsics: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const CorneaModel& m) {
  return {{"eccentricity", m.eccentricity}, {"apex_radius", m.apex_radius},
          {"base_radius", m.base_radius}};
}

CorneaModel cornea_model_from_json(const json& j) {
  CorneaModel m;
  try {
    if (j.contains("eccentricity")) m.eccentricity = j["eccentricity"].get<double>();
    if (j.contains("apex_radius")) m.apex_radius = j["apex_radius"].get<double>();
    if (j.contains("base_radius")) m.base_radius = j["base_radius"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad cornea model: ") + e.what());
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return m;
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-element array");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

json observation_record(const CorneaObservation& obs) {
  return {{"frame", obs.frame},   {"cx", obs.cx},
          {"cy", obs.cy},         {"r_img", obs.r_img},
          {"minor_radius", obs.minor_radius}, {"rotation", obs.rotation}};
}

CorneaObservation observation_from_record(const json& j) {
  CorneaObservation o;
  try {
    o.frame = j.at("frame").get<int>();
    o.cx = j.at("cx").get<double>();
    o.cy = j.at("cy").get<double>();
    o.r_img = j.at("r_img").get<double>();
    o.minor_radius = j.value("minor_radius", o.r_img);
    o.rotation = j.value("rotation", 0.0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad observation record: ") + e.what());
  }
  if (!(o.r_img > 0.0)) throw ConfigError("observation r_img must be positive");
  return o;
}

json observations_document(const CorneaModel& model, const std::vector<CorneaObservation>& obs) {
  json frames = json::array();
  for (const auto& o : obs) frames.push_back(observation_record(o));
  return {{"model", to_json(model)}, {"frames", frames}};
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace cf
