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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "dataset.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "ingest.hpp"
#include "synth.hpp"

using namespace cf;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cf_test_synth" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// On-axis cornea whose apex lands exactly on pixel (240, 320).
struct OnAxis {
  CorneaModel model;
  CameraIntrinsics camera{1100.0, 320.0, 240.0, 640, 480};
  RigidTransform pose = cornea_pose(model, Vec3(0.0, 0.0, 300.0), -Vec3::UnitZ());
};

IrisSpec black_iris() {
  IrisSpec iris;
  iris.profile = {{0.0, Vec3::Zero()}, {1.0, Vec3::Zero()}};
  return iris;
}

}  // namespace

TEST_CASE("iris profile") {
  const SynthConfig c = SynthConfig::defaults();
  const IrisSpec& iris = c.iris;
  IrisSpec plain = iris;
  plain.angular_amplitude = 0.0;
  CHECK((plain.color(Vec2(0.0, 0.0)) - Vec3::Constant(0.03)).norm() < 1e-15);
  CHECK((plain.color(Vec2(0.6, 0.0)) - Vec3(0.24, 0.15, 0.08)).norm() < 1e-12);
  // Linear between control points.
  const Vec3 mid = plain.color(Vec2(0.0, 0.43));
  CHECK((mid - 0.5 * (Vec3(0.30, 0.18, 0.09) + Vec3(0.24, 0.15, 0.08))).norm() < 1e-12);
  // Without modulation the iris is radially constant.
  CHECK((plain.color(Vec2(0.3, 0.4)) - plain.color(Vec2(-0.5, 0.0))).norm() < 1e-12);
  // With modulation it is not.
  CHECK((iris.color(Vec2(0.5, 0.0)) - iris.color(Vec2(0.0, 0.5))).norm() > 1e-3);

  IrisSpec bad = plain;
  bad.profile = {{0.0, Vec3::Zero()}, {0.5, Vec3::Zero()}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.profile = {{0.0, Vec3::Zero()}, {0.6, Vec3::Zero()}, {0.5, Vec3::Zero()}, {1.0, Vec3::Zero()}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.profile = {{0.0, Vec3::Zero()}, {1.0, Vec3::Constant(1.5)}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scene tracing") {
  SceneSpec s;
  Ray r;
  r.direction = Vec3::UnitZ();
  CHECK(s.trace(r) == Vec3::Zero());
  s.spheres.push_back({Vec3(0, 0, 50), 10.0, Vec3(0.2, 0.3, 0.4)});
  s.boxes.push_back({Vec3(-5, -5, 20), Vec3(5, 5, 30), Vec3(0.7, 0.1, 0.1)});
  s.ambient = 0.1;
  // The nearer box wins.
  CHECK((s.trace(r) - Vec3(0.8, 0.2, 0.2)).norm() < 1e-15);
  r.origin = Vec3(8.0, 0.0, 0.0);
  CHECK((s.trace(r) - Vec3(0.3, 0.4, 0.5)).norm() < 1e-15);
  r.direction = -Vec3::UnitZ();
  CHECK(s.trace(r) == Vec3::Zero());
  s.spheres[0].color = Vec3(1.2, 0, 0);
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("empty scene shows the bare iris") {
  const OnAxis setup;
  const SynthConfig c = SynthConfig::defaults();
  const FrameRender fr =
      render_frame(SceneSpec{}, c.iris, setup.model, setup.pose, setup.camera, c.skin);
  int cornea = 0;
  for (int y = 0; y < setup.camera.height; ++y) {
    for (int x = 0; x < setup.camera.width; ++x) {
      if (fr.mask.at(y, x, 0) == 0.0) {
        for (int k = 0; k < 3; ++k) {
          REQUIRE(fr.image.at(y, x, k) == quantize16(c.skin[k]) / 65535.0);
        }
        continue;
      }
      ++cornea;
      const Vec2 p = eye_projection(fr.observation, y, x);
      const Vec3 iris = c.iris.color(p);
      for (int k = 0; k < 3; ++k) {
        REQUIRE(std::abs(fr.image.at(y, x, k) - iris[k]) <= 0.5 / 65535.0 + 1e-15);
      }
    }
  }
  const double r = fr.observation.r_img;
  CHECK(r == doctest::Approx(5.5 * 1100.0 / 300.0).epsilon(1e-12));
  CHECK(cornea == static_cast<int>(fr.observation.mask.count()));
  CHECK(std::abs(cornea - M_PI * r * r) < 0.1 * M_PI * r * r);
  CHECK(fr.observation.cx == doctest::Approx(320.0).epsilon(1e-12));
  CHECK(fr.observation.cy == doctest::Approx(240.0).epsilon(1e-12));
}

TEST_CASE("black iris and empty scene give black cornea pixels") {
  const OnAxis setup;
  const FrameRender fr = render_frame(SceneSpec{}, black_iris(), setup.model, setup.pose,
                                      setup.camera, Vec3::Constant(0.5));
  int cornea = 0;
  for (int y = 0; y < setup.camera.height; ++y) {
    for (int x = 0; x < setup.camera.width; ++x) {
      if (fr.mask.at(y, x, 0) == 0.0) continue;
      ++cornea;
      for (int k = 0; k < 3; ++k) REQUIRE(fr.image.at(y, x, k) == 0.0);
    }
  }
  CHECK(cornea > 100);
}

TEST_CASE("apex pixel adds the sphere on its reflected ray") {
  const OnAxis setup;
  // The apex reflects the camera ray straight back along -z.
  SceneSpec scene;
  scene.spheres.push_back({Vec3(0.0, 0.0, 150.0), 8.0, Vec3(0.9, 0.05, 0.05)});
  const SynthConfig c = SynthConfig::defaults();
  const FrameRender fr =
      render_frame(scene, c.iris, setup.model, setup.pose, setup.camera, c.skin);
  REQUIRE(fr.mask.at(240, 320, 0) == 1.0);
  const Vec3 expect = (c.iris.color(Vec2::Zero()) + Vec3(0.9, 0.05, 0.05)).cwiseMin(1.0);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(fr.image.at(240, 320, k) - expect[k]) <= 0.5 / 65535.0 + 1e-15);
  }
  // Saturating sphere clamps at one.
  scene.spheres[0].color = Vec3(1.0, 1.0, 1.0);
  scene.ambient = 0.5;
  const FrameRender sat =
      render_frame(scene, c.iris, setup.model, setup.pose, setup.camera, c.skin);
  for (int k = 0; k < 3; ++k) CHECK(sat.image.at(240, 320, k) == 1.0);
}

TEST_CASE("cornea outside the frame is refused") {
  const OnAxis setup;
  const RigidTransform off = cornea_pose(setup.model, Vec3(170.0, 0.0, 300.0), -Vec3::UnitZ());
  CHECK_THROWS_AS(render_frame(SceneSpec{}, black_iris(), setup.model, off, setup.camera,
                               Vec3::Zero()),
                  Error);
}

TEST_CASE("direct views of the scene") {
  const CameraIntrinsics intr{50.0, 39.5, 31.5, 80, 64};
  const PinholeCamera cam = PinholeCamera::look_at(intr, Vec3(0, 0, -100), Vec3(0, 0, 0));
  const Image empty = render_ground_truth_view(SceneSpec{}, cam);
  for (double v : empty.data) REQUIRE(v == 0.0);

  SceneSpec fill;
  fill.spheres.push_back({Vec3(0, 0, 0), 90.0, Vec3(0.2, 0.5, 0.3)});
  fill.ambient = 0.1;
  const Image full = render_ground_truth_view(fill, cam);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 80; ++x) {
      REQUIRE((Vec3(full.at(y, x, 0), full.at(y, x, 1), full.at(y, x, 2)) -
               Vec3(0.3, 0.6, 0.4)).norm() < 1e-15);
    }
  }
}

TEST_CASE("default scene matches the golden view") {
  const SynthConfig c = SynthConfig::defaults();
  const auto cams = c.held_out_cameras();
  REQUIRE(cams.size() == 4);
  const Image view = render_ground_truth_view(c.scene, cams[0]);
  PngInfo info;
  const Image golden = read_png(std::string(CF_TEST_DATA_DIR) + "/default_view_0.png", &info);
  CHECK(info.bit_depth == 16);
  REQUIRE(golden.width == view.width);
  REQUIRE(golden.height == view.height);
  for (std::size_t i = 0; i < view.data.size(); ++i) {
    REQUIRE(quantize16(view.data[i]) / 65535.0 == golden.data[i]);
  }
}

TEST_CASE("trajectory and config validation") {
  SynthConfig c = SynthConfig::defaults();
  CHECK_NOTHROW(c.validate());
  CHECK(c.trajectory.frame_count() == 16);
  // Gaze more than 60 degrees away from the camera.
  c.trajectory.gazes.assign(c.trajectory.centers.size(), Vec3::UnitX());
  CHECK_THROWS_AS(c.validate(), Error);
  c = SynthConfig::defaults();
  c.trajectory.centers[0].z() = -5.0;
  CHECK_THROWS_AS(c.validate(), Error);

  const SynthConfig d = SynthConfig::defaults();
  const SynthConfig back = synth_config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  nlohmann::json j = to_json(d);
  j["bogus"] = 1;
  CHECK_THROWS_AS(synth_config_from_json(j), Error);
}

TEST_CASE("datasets: noise law, sidecar, reproducibility") {
  SynthConfig c = SynthConfig::defaults();
  // Fewer frames keep the test quick.
  c.trajectory.centers.resize(5);
  const std::string d0 = temp_dir("s0");
  const DatasetSummary s0 = make_dataset(c, 0.0, 7, d0);
  CHECK(s0.frames == 5);
  CHECK(s0.exact_radii == s0.recorded_radii);
  for (const char* f : {"camera.json", "observations.json", "frames/0000.png", "masks/0004.png",
                        "ground_truth/observations.json", "ground_truth/scene.json",
                        "ground_truth/trajectory.json", "ground_truth/eval_cameras.json"}) {
    CHECK(fs::exists(fs::path(d0) / f));
  }
  PngInfo info;
  read_png(d0 + "/frames/0000.png", &info);
  CHECK(info.bit_depth == 16);
  read_png(d0 + "/masks/0000.png", &info);
  CHECK(info.bit_depth == 8);

  const std::string d1 = temp_dir("s1"), d2 = temp_dir("s2");
  const DatasetSummary a = make_dataset(c, 0.1, 42, d1);
  const DatasetSummary b = make_dataset(c, 0.1, 42, d2);
  CHECK(a.recorded_radii == b.recorded_radii);
  double worst = 0.0;
  bool changed = false;
  for (std::size_t f = 0; f < a.exact_radii.size(); ++f) {
    worst = std::max(worst, std::abs(a.recorded_radii[f] / a.exact_radii[f] - 1.0));
    changed |= a.recorded_radii[f] != a.exact_radii[f];
  }
  CHECK(worst <= 0.1 + 1e-15);
  CHECK(changed);
  // The recorded observations carry the noise; the sidecar does not.
  const auto rec = read_json_file(d1 + "/observations.json");
  const auto gt = read_json_file(d1 + "/ground_truth/observations.json");
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(observation_from_record(rec["frames"][f]).r_img == a.recorded_radii[f]);
    CHECK(observation_from_record(gt["frames"][f]).r_img == a.exact_radii[f]);
  }
  // Same images regardless of noise.
  CHECK(read_png(d0 + "/frames/0003.png").data == read_png(d1 + "/frames/0003.png").data);
  CHECK(make_dataset(c, 0.1, 43, temp_dir("s3")).recorded_radii != a.recorded_radii);
  CHECK_THROWS_AS(make_dataset(c, -0.1, 1, temp_dir("s4")), Error);
}
