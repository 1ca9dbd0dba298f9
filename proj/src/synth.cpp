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

#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "dataset.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace cf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool in_unit(const Vec3& c) {
  return (c.array() >= 0.0).all() && (c.array() <= 1.0).all();
}

double hit_sphere(const Sphere& s, const Ray& r) {
  const Vec3 oc = r.origin - s.center;
  const double b = oc.dot(r.direction);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t0 = -b - sq;
  if (t0 > 0.0) return t0;
  const double t1 = -b + sq;
  return t1 > 0.0 ? t1 : -1.0;
}

double hit_box(const Box& box, const Ray& r) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (r.direction[a] == 0.0) {
      if (r.origin[a] < box.lo[a] || r.origin[a] > box.hi[a]) return -1.0;
      continue;
    }
    double t0 = (box.lo[a] - r.origin[a]) / r.direction[a];
    double t1 = (box.hi[a] - r.origin[a]) / r.direction[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_far <= 0.0) return -1.0;
  return t_near > 0.0 ? t_near : t_far;
}

}  // namespace

void SceneSpec::validate() const {
  for (const auto& s : spheres) {
    if (!(s.radius > 0.0)) throw ConfigError("sphere radius must be positive");
    if (!in_unit(s.color)) throw ConfigError("sphere color must lie in [0,1]^3");
  }
  for (const auto& b : boxes) {
    if (!((b.hi.array() > b.lo.array()).all())) throw ConfigError("box max must exceed min");
    if (!in_unit(b.color)) throw ConfigError("box color must lie in [0,1]^3");
  }
  if (!(ambient >= 0.0 && ambient <= 1.0)) throw ConfigError("ambient must lie in [0,1]");
}

Vec3 SceneSpec::trace(const Ray& ray) const {
  double best = std::numeric_limits<double>::infinity();
  Vec3 color = Vec3::Zero();
  bool hit = false;
  for (const auto& s : spheres) {
    const double t = hit_sphere(s, ray);
    if (t > 0.0 && t < best) {
      best = t;
      color = s.color;
      hit = true;
    }
  }
  for (const auto& b : boxes) {
    const double t = hit_box(b, ray);
    if (t > 0.0 && t < best) {
      best = t;
      color = b.color;
      hit = true;
    }
  }
  if (!hit) return Vec3::Zero();
  return (color.array() + ambient).min(1.0).matrix();
}

void IrisSpec::validate() const {
  if (profile.size() < 2) throw ConfigError("iris profile needs at least two control points");
  if (profile.front().radius != 0.0 || profile.back().radius != 1.0) {
    throw ConfigError("iris profile must cover radius fractions 0 through 1");
  }
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (!(profile[i].radius > profile[i - 1].radius)) {
      throw ConfigError("iris profile radii must be strictly increasing");
    }
  }
  for (const auto& cp : profile) {
    if (!in_unit(cp.color)) throw ConfigError("iris colors must lie in [0,1]^3");
  }
  if (angular_amplitude < 0.0) throw ConfigError("angular amplitude must be non-negative");
}

Vec3 IrisSpec::color(const Vec2& p) const {
  const double rho = std::min(1.0, p.norm());
  auto hi = std::upper_bound(profile.begin(), profile.end(), rho,
                             [](double r, const ControlPoint& cp) { return r < cp.radius; });
  Vec3 base;
  if (hi == profile.end()) {
    base = profile.back().color;
  } else {
    const auto lo = hi - 1;
    const double w = (rho - lo->radius) / (hi->radius - lo->radius);
    base = (1.0 - w) * lo->color + w * hi->color;
  }
  if (angular_amplitude > 0.0 && rho > 0.0) {
    const double phi = std::atan2(p.x(), p.y());
    base *= 1.0 + angular_amplitude * std::sin(angular_frequency * phi);
  }
  return base.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 TrajectorySpec::gaze(int frame) const {
  if (!gazes.empty()) return gazes[static_cast<std::size_t>(frame)].normalized();
  return -centers[static_cast<std::size_t>(frame)].normalized();
}

void TrajectorySpec::validate() const {
  if (centers.empty()) throw ConfigError("trajectory has no frames");
  if (!gazes.empty() && gazes.size() != centers.size()) {
    throw ConfigError("trajectory gazes must match centers one-to-one");
  }
  for (int f = 0; f < frame_count(); ++f) {
    const Vec3& c = centers[static_cast<std::size_t>(f)];
    if (!(c.z() > 0.0)) throw ConfigError("cornea centers must lie in front of the camera");
    const double cosang = gaze(f).dot(-c.normalized());
    if (cosang < std::cos(60.0 * M_PI / 180.0)) {
      throw ConfigError("cornea " + std::to_string(f) +
                        " faces more than 60 degrees away from the camera");
    }
  }
}

void SynthConfig::validate() const {
  try {
    model.validate();
    camera.validate();
    eval_intrinsics.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  scene.validate();
  iris.validate();
  trajectory.validate();
  if (!in_unit(skin)) throw ConfigError("skin color must lie in [0,1]^3");
  for (double s : noise_levels) {
    if (!(s >= 0.0)) throw ConfigError("noise levels must be non-negative");
  }
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.scene.boxes.push_back({Vec3(-135.0, -35.0, 15.0), Vec3(-45.0, 55.0, 105.0),
                           Vec3(0.55, 0.12, 0.10)});
  c.scene.spheres.push_back({Vec3(85.0, -10.0, 40.0), 50.0, Vec3(0.12, 0.45, 0.20)});
  c.scene.ambient = 0.0;

  c.iris.profile = {{0.0, Vec3(0.03, 0.03, 0.03)},
                    {0.18, Vec3(0.03, 0.03, 0.03)},
                    {0.26, Vec3(0.30, 0.18, 0.09)},
                    {0.60, Vec3(0.24, 0.15, 0.08)},
                    {0.90, Vec3(0.14, 0.09, 0.05)},
                    {1.0, Vec3(0.10, 0.07, 0.05)}};
  c.iris.angular_amplitude = 0.15;
  c.iris.angular_frequency = 9;

  c.camera = CameraIntrinsics{1100.0, 319.5, 239.5, 640, 480};
  // A 4 x 4 grid of head positions with depth jitter, all facing the camera.
  const double xs[] = {-60.0, -20.0, 20.0, 60.0};
  const double ys[] = {-40.0, -13.0, 13.0, 40.0};
  const double zs[] = {300.0, 292.0, 308.0, 296.0, 304.0, 290.0, 310.0, 298.0,
                       302.0, 294.0, 306.0, 300.0, 296.0, 304.0, 291.0, 309.0};
  int k = 0;
  for (double y : ys) {
    for (double x : xs) {
      c.trajectory.centers.push_back(Vec3(x, y, zs[k++]));
    }
  }

  const double radius = 300.0;
  for (double deg : {-10.0, -3.5, 3.5, 10.0}) {
    const double a = deg * M_PI / 180.0;
    c.eval_cameras.push_back({Vec3(radius * std::sin(a), 5.0, radius * std::cos(a)),
                              Vec3(0.0, 0.0, 40.0)});
  }
  return c;
}

std::vector<PinholeCamera> SynthConfig::held_out_cameras() const {
  std::vector<PinholeCamera> cams;
  for (const auto& e : eval_cameras) {
    cams.push_back(PinholeCamera::look_at(eval_intrinsics, e.eye, e.target));
  }
  return cams;
}

json to_json(const SynthConfig& c) {
  json spheres = json::array();
  for (const auto& s : c.scene.spheres) {
    spheres.push_back({{"center", to_json(s.center)}, {"radius", s.radius},
                       {"color", to_json(s.color)}});
  }
  json boxes = json::array();
  for (const auto& b : c.scene.boxes) {
    boxes.push_back({{"min", to_json(b.lo)}, {"max", to_json(b.hi)}, {"color", to_json(b.color)}});
  }
  json profile = json::array();
  for (const auto& cp : c.iris.profile) {
    profile.push_back({{"radius", cp.radius}, {"color", to_json(cp.color)}});
  }
  json centers = json::array();
  for (const auto& v : c.trajectory.centers) centers.push_back(to_json(v));
  json gazes = json::array();
  for (const auto& v : c.trajectory.gazes) gazes.push_back(to_json(v));
  json evals = json::array();
  for (const auto& e : c.eval_cameras) {
    evals.push_back({{"eye", to_json(e.eye)}, {"target", to_json(e.target)}});
  }
  return {{"model", to_json(c.model)},
          {"camera", to_json(c.camera)},
          {"scene", {{"spheres", spheres}, {"boxes", boxes}, {"ambient", c.scene.ambient}}},
          {"iris",
           {{"profile", profile},
            {"angular_amplitude", c.iris.angular_amplitude},
            {"angular_frequency", c.iris.angular_frequency}}},
          {"trajectory", {{"centers", centers}, {"gazes", gazes}}},
          {"skin", to_json(c.skin)},
          {"eval_camera", to_json(c.eval_intrinsics)},
          {"eval_views", evals},
          {"noise_levels", c.noise_levels}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c = SynthConfig::defaults();
  if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
  static const char* kKeys[] = {"model", "camera",     "scene",       "iris",
                                "trajectory", "skin", "eval_camera", "eval_views",
                                "noise_levels"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown synthetic config key '" + key + "'");
    }
  }
  try {
    if (j.contains("model")) c.model = cornea_model_from_json(j["model"]);
    if (j.contains("camera")) c.camera = intrinsics_from_json(j["camera"]);
    if (j.contains("scene")) {
      const auto& s = j["scene"];
      c.scene = SceneSpec{};
      for (const auto& e : s.value("spheres", json::array())) {
        c.scene.spheres.push_back({vec3_from_json(e.at("center"), "sphere center"),
                                   e.at("radius").get<double>(),
                                   vec3_from_json(e.at("color"), "sphere color")});
      }
      for (const auto& e : s.value("boxes", json::array())) {
        c.scene.boxes.push_back({vec3_from_json(e.at("min"), "box min"),
                                 vec3_from_json(e.at("max"), "box max"),
                                 vec3_from_json(e.at("color"), "box color")});
      }
      c.scene.ambient = s.value("ambient", 0.0);
    }
    if (j.contains("iris")) {
      const auto& i = j["iris"];
      c.iris = IrisSpec{};
      for (const auto& e : i.at("profile")) {
        c.iris.profile.push_back(
            {e.at("radius").get<double>(), vec3_from_json(e.at("color"), "iris color")});
      }
      c.iris.angular_amplitude = i.value("angular_amplitude", 0.0);
      c.iris.angular_frequency = i.value("angular_frequency", 9);
    }
    if (j.contains("trajectory")) {
      const auto& t = j["trajectory"];
      c.trajectory = TrajectorySpec{};
      for (const auto& e : t.at("centers")) {
        c.trajectory.centers.push_back(vec3_from_json(e, "trajectory center"));
      }
      for (const auto& e : t.value("gazes", json::array())) {
        c.trajectory.gazes.push_back(vec3_from_json(e, "trajectory gaze"));
      }
    }
    if (j.contains("skin")) c.skin = vec3_from_json(j["skin"], "skin");
    if (j.contains("eval_camera")) c.eval_intrinsics = intrinsics_from_json(j["eval_camera"]);
    if (j.contains("eval_views")) {
      c.eval_cameras.clear();
      for (const auto& e : j["eval_views"]) {
        c.eval_cameras.push_back({vec3_from_json(e.at("eye"), "eval eye"),
                                  vec3_from_json(e.at("target"), "eval target")});
      }
    }
    if (j.contains("noise_levels")) c.noise_levels = j["noise_levels"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

CorneaObservation exact_observation(const CorneaModel& model, const CameraIntrinsics& intr,
                                    const RigidTransform& pose, int frame) {
  const Vec3 center = pose.apply(Vec3(0.0, 0.0, model.apex_to_base()));
  const Vec2 c = intr.project(center);
  CorneaObservation obs;
  obs.frame = frame;
  obs.cy = c.x();
  obs.cx = c.y();
  obs.r_img = model.base_radius * intr.focal / center.z();
  const Vec3 gaze = pose.apply_direction(-Vec3::UnitZ());
  obs.minor_radius = obs.r_img * std::abs(gaze.dot(-center.normalized()));
  obs.rotation = 0.0;
  return obs;
}

FrameRender render_frame(const SceneSpec& scene, const IrisSpec& iris,
                         const CorneaModel& model, const RigidTransform& pose,
                         const CameraIntrinsics& camera, const Vec3& skin, int frame) {
  FrameRender out;
  out.observation = exact_observation(model, camera, pose, frame);
  CorneaObservation& obs = out.observation;
  const int margin = 2;
  const int x0 = static_cast<int>(std::floor(obs.cx - obs.r_img)) - margin;
  const int y0 = static_cast<int>(std::floor(obs.cy - obs.r_img)) - margin;
  const int x1 = static_cast<int>(std::ceil(obs.cx + obs.r_img)) + margin;
  const int y1 = static_cast<int>(std::ceil(obs.cy + obs.r_img)) + margin;
  if (x0 < 0 || y0 < 0 || x1 >= camera.width || y1 >= camera.height) {
    throw ArgumentError("cornea of frame " + std::to_string(frame) +
                        " does not project fully inside the image");
  }

  out.image = Image(camera.width, camera.height, 3);
  out.mask = Image(camera.width, camera.height, 1, 0.0);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = quantize16(skin[c]) / 65535.0;
    }
  }
  obs.mask.x0 = x0;
  obs.mask.y0 = y0;
  obs.mask.width = x1 - x0 + 1;
  obs.mask.height = y1 - y0 + 1;
  obs.mask.bits.assign(static_cast<std::size_t>(obs.mask.width) * obs.mask.height, 0);

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p((y - obs.cy) / obs.r_img, (x - obs.cx) / obs.r_img);
      if (p.squaredNorm() > 1.0) continue;
      Ray cam;
      cam.direction = camera.pixel_direction(y, x);
      const auto hit = intersect(model, cam, pose);
      if (!hit || hit->normal.dot(cam.direction) >= 0.0) continue;
      Ray bounce;
      bounce.origin = hit->point;
      bounce.direction = reflect(cam.direction, hit->normal).normalized();
      const Vec3 color = (iris.color(p) + scene.trace(bounce)).cwiseMax(0.0).cwiseMin(1.0);
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = quantize16(color[c]) / 65535.0;
      out.mask.at(y, x, 0) = 1.0;
      obs.mask.bits[static_cast<std::size_t>(y - y0) * obs.mask.width + (x - x0)] = 1;
    }
  }
  return out;
}

Image render_ground_truth_view(const SceneSpec& scene, const PinholeCamera& camera) {
  const CameraIntrinsics& in = camera.intrinsics;
  Image img(in.width, in.height, 3);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const Vec3 c = scene.trace(camera.ray(y, x));
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
    }
  }
  return img;
}

DatasetSummary make_dataset(const SynthConfig& config, double noise, std::uint64_t seed,
                            const std::string& directory) {
  config.validate();
  if (!(noise >= 0.0)) throw ArgumentError("noise level must be non-negative");

  const fs::path root(directory);
  std::error_code ec;
  for (const char* sub : {"frames", "masks", "ground_truth"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw IoError("cannot create '" + (root / sub).string() + "': " + ec.message());
  }

  DatasetSummary summary;
  summary.directory = directory;
  summary.noise = noise;
  summary.seed = seed;
  summary.frames = config.trajectory.frame_count();

  Rng rng(seed);
  std::vector<CorneaObservation> exact;
  std::vector<CorneaObservation> recorded;
  json poses = json::array();
  for (int f = 0; f < config.trajectory.frame_count(); ++f) {
    const Vec3& center = config.trajectory.centers[static_cast<std::size_t>(f)];
    const Vec3 gaze = config.trajectory.gaze(f);
    const RigidTransform pose = cornea_pose(config.model, center, gaze);
    const FrameRender fr =
        render_frame(config.scene, config.iris, config.model, pose, config.camera, config.skin, f);
    write_png((root / "frames" / frame_file_name(f)).string(), fr.image, 16);
    write_png((root / "masks" / frame_file_name(f)).string(), fr.mask, 8);

    CorneaObservation rec = fr.observation;
    const double u = rng.uniform(-1.0, 1.0);
    if (noise > 0.0) {
      rec.r_img = fr.observation.r_img * (1.0 + noise * u);
      rec.minor_radius = fr.observation.minor_radius * (1.0 + noise * u);
    }
    exact.push_back(fr.observation);
    recorded.push_back(rec);
    summary.exact_radii.push_back(fr.observation.r_img);
    summary.recorded_radii.push_back(rec.r_img);
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
    }
    poses.push_back({{"frame", f}, {"center", to_json(center)}, {"gaze", to_json(gaze)},
                     {"rotation", rot}, {"translation", to_json(pose.translation)}});
  }

  write_json_file((root / "camera.json").string(), to_json(config.camera));
  write_json_file((root / "observations.json").string(),
                  observations_document(config.model, recorded));
  write_json_file((root / "ground_truth" / "observations.json").string(),
                  observations_document(config.model, exact));
  write_json_file((root / "ground_truth" / "scene.json").string(), to_json(config));
  write_json_file((root / "ground_truth" / "trajectory.json").string(), {{"frames", poses}});
  json evals = json::array();
  for (const auto& cam : config.held_out_cameras()) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rot.push_back(cam.camera_to_world.rotation(r, c));
    }
    evals.push_back({{"intrinsics", to_json(cam.intrinsics)},
                     {"rotation", rot},
                     {"position", to_json(cam.camera_to_world.translation)}});
  }
  write_json_file((root / "ground_truth" / "eval_cameras.json").string(), {{"cameras", evals}});
  write_json_file((root / "ground_truth" / "synthesis.json").string(),
                  {{"noise", noise}, {"seed", seed}});
  return summary;
}

}  // namespace cf
