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

#include "pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <algorithm>

#include "dataset.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "metrics.hpp"
#include "render.hpp"

namespace cf {

using nlohmann::json;
namespace fs = std::filesystem;

RunOptions RunOptions::from_json(const json& j) {
  RunOptions o;
  if (!j.is_object()) throw ConfigError("run options must be a JSON object");
  try {
    o.config_path = j.value("config", "");
    o.dataset = j.value("dataset", "");
    o.out = j.value("out", "");
    o.checkpoint = j.value("checkpoint", "");
    if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("noise")) o.noise = j["noise"].get<double>();
    if (j.contains("steps")) o.steps = j["steps"].get<int>();
    o.no_texture = j.value("no_texture", false);
    o.no_pose_opt = j.value("no_pose_opt", false);
    o.no_radial = j.value("no_radial", false);
    o.ground_truth_poses = j.value("ground_truth_poses", false);
    o.orbit = j.value("orbit", 0);
    if (j.contains("eye")) o.eye = vec3_from_json(j["eye"], "eye");
    if (j.contains("target")) o.target = vec3_from_json(j["target"], "target");
    o.quiet = j.value("quiet", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run options: ") + e.what());
  }
  return o;
}

ProjectConfig ProjectConfig::load(const std::string& path) {
  ProjectConfig pc;
  if (path.empty()) return pc;
  pc.raw = read_json_file(path);
  if (!pc.raw.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, _] : pc.raw.items()) {
    if (key != "synth" && key != "train") {
      throw ConfigError("unknown config section '" + key + "' (expected synth, train)");
    }
  }
  if (pc.raw.contains("synth")) pc.synth = synth_config_from_json(pc.raw["synth"]);
  if (pc.raw.contains("train")) pc.train = TrainConfig::from_json(pc.raw["train"].dump());
  return pc;
}

std::string ProjectConfig::hash() const {
  const std::string text = to_json(synth).dump() + train.to_json();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig effective_train_config(const ProjectConfig& pc, const RunOptions& opts) {
  TrainConfig c = pc.train;
  if (opts.seed) c.seed = *opts.seed;
  if (opts.steps) c.steps = *opts.steps;
  if (opts.no_texture) c.texture_decomposition = false;
  if (opts.no_pose_opt) c.pose_optimization = false;
  if (opts.no_radial) c.lambda_radial = 0.0;
  if (opts.ground_truth_poses) c.use_ground_truth_poses = true;
  c.validate();
  return c;
}

namespace {

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'" +
                  (ec ? ": " + ec.message() : std::string()));
  }
  // Probe writability before any long-running work starts.
  const fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw IoError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

std::string ground_truth_dir_of(const std::string& dataset) {
  const CaptureManifest m = load_manifest(dataset);
  if (m.ground_truth_dir.empty() || !fs::is_directory(m.ground_truth_dir)) {
    throw ConfigError("dataset '" + dataset +
                      "' has no ground_truth sidecar; real captures have no ground truth, "
                      "so held-out metrics can only be computed on simulator datasets");
  }
  return m.ground_truth_dir;
}

std::vector<PinholeCamera> load_eval_cameras(const std::string& gt_dir) {
  const json doc = read_json_file((fs::path(gt_dir) / "eval_cameras.json").string());
  std::vector<PinholeCamera> cams;
  try {
    for (const auto& c : doc.at("cameras")) {
      PinholeCamera cam;
      cam.intrinsics = intrinsics_from_json(c.at("intrinsics"));
      const auto& rot = c.at("rotation");
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) cam.camera_to_world.rotation(r, k) = rot.at(r * 3 + k).get<double>();
      }
      cam.camera_to_world.translation = vec3_from_json(c.at("position"), "position");
      cams.push_back(cam);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad eval_cameras.json: ") + e.what());
  }
  return cams;
}

}  // namespace

TrainingSet load_training_set(const std::string& dataset, const TrainConfig& config) {
  WarningSink warnings;
  const LoadedCapture cap = load_capture(dataset, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (!config.use_ground_truth_poses) return make_training_set(cap);
  if (cap.manifest.ground_truth_dir.empty()) {
    throw ConfigError("use_ground_truth_poses requires a simulator dataset with a sidecar");
  }
  const auto gt = load_ground_truth_poses(cap.manifest.ground_truth_dir);
  return make_training_set(cap, &gt);
}

TrainOutcome train_on_dataset(const std::string& dataset, const TrainConfig& config,
                              const std::string& loss_log_path) {
  TrainOutcome out;
  out.data = load_training_set(dataset, config);

  std::ofstream log;
  if (!loss_log_path.empty()) {
    log.open(loss_log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open loss log '" + loss_log_path + "'");
    log << "step,recon,radial,center,total\n";
    log.precision(17);
  }
  out.state = fit(out.data, config, [&](const LossReport& r) {
    if (log.is_open()) {
      log << r.step << ',' << r.recon << ',' << r.radial << ',' << r.center << ',' << r.total
          << '\n';
    }
  });
  out.training_psnr = training_psnr(out.state, out.data);
  return out;
}

json EvalMetrics::to_json() const {
  json tw = json::array();
  for (const Twist& t : twists) tw.push_back(std::vector<double>(t.data(), t.data() + 6));
  return {{"ssim", ssim},
          {"psnr", psnr},
          {"ssim_mean", ssim_mean},
          {"psnr_mean", psnr_mean},
          {"reprojection_initial_px", reprojection_initial},
          {"reprojection_refined_px", reprojection_refined},
          {"texture_rms", texture_rms},
          {"frame_reprojection_initial_px", frame_reprojection_initial},
          {"frame_reprojection_refined_px", frame_reprojection_refined},
          {"twists", tw}};
}

double limbus_reprojection_error(const CorneaModel& model, const CameraIntrinsics& intr,
                                 const RigidTransform& a, const RigidTransform& b) {
  // Symmetric mean closest-point distance between the two projected limbus
  // curves; a roll of the cornea about its own axis leaves it unchanged.
  constexpr int kPoints = 256;
  const double t_b = model.apex_to_base();
  std::vector<Vec2> pa(kPoints), pb(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double phi = 2.0 * M_PI * i / kPoints;
    const Vec3 q(model.base_radius * std::cos(phi), model.base_radius * std::sin(phi), t_b);
    pa[i] = intr.project(a.apply(q));
    pb[i] = intr.project(b.apply(q));
  }
  auto one_way = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double sum = 0.0;
    for (const Vec2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < to.size(); ++j) {
        // Distance to the polyline segment to[j] -> to[j+1].
        const Vec2& s0 = to[j];
        const Vec2& s1 = to[(j + 1) % to.size()];
        const Vec2 seg = s1 - s0;
        const double len2 = seg.squaredNorm();
        const double u = len2 > 0.0 ? std::clamp((p - s0).dot(seg) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (p - (s0 + u * seg)).norm());
      }
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(pa, pb) + one_way(pb, pa));
}

RigidTransform refined_pose(const TrainState& state, const RigidTransform& initial, int frame) {
  return initial.then(frame_motion(state, frame));
}

double texture_rms_error(const TrainState& state, const IrisSpec& iris, int grid) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const Vec2 p(-1.0 + 2.0 * i / (grid - 1), -1.0 + 2.0 * j / (grid - 1));
      if (p.squaredNorm() > 1.0) continue;
      sum += (state.texture_color(p) - iris.color(p)).squaredNorm();
      n += 3;
    }
  }
  return std::sqrt(sum / static_cast<double>(n));
}

EvalMetrics evaluate_against_ground_truth(const TrainState& state, const std::string& dataset) {
  const std::string gt_dir = ground_truth_dir_of(dataset);
  const SynthConfig sc =
      synth_config_from_json(read_json_file((fs::path(gt_dir) / "scene.json").string()));
  EvalMetrics m;
  for (const auto& cam : load_eval_cameras(gt_dir)) {
    const Image ref = render_ground_truth_view(sc.scene, cam);
    const FieldView view = render_field_view(state.scene, cam, state.config.sampling);
    m.ssim.push_back(ssim(view.color, ref));
    m.psnr.push_back(psnr(view.color, ref));
  }
  for (std::size_t i = 0; i < m.ssim.size(); ++i) {
    m.ssim_mean += m.ssim[i] / static_cast<double>(m.ssim.size());
    m.psnr_mean += m.psnr[i] / static_cast<double>(m.psnr.size());
  }

  const LoadedCapture cap = load_capture(dataset);
  const CaptureManifest& man = cap.manifest;
  const auto gt_poses = load_ground_truth_poses(gt_dir);
  if (gt_poses.size() != man.frames.size() || state.poses.size() != man.frames.size()) {
    throw ConfigError("checkpoint, dataset, and ground truth disagree on the frame count");
  }
  for (std::size_t f = 0; f < man.frames.size(); ++f) {
    const CorneaObservation& obs = cap.observations[f];
    const RigidTransform initial = state.config.use_ground_truth_poses
                                       ? gt_poses[f]
                                       : place_cornea(man.model, man.intrinsics, obs);
    const RigidTransform refined = refined_pose(state, initial, static_cast<int>(f));
    m.frame_reprojection_initial.push_back(
        limbus_reprojection_error(man.model, man.intrinsics, initial, gt_poses[f]));
    m.frame_reprojection_refined.push_back(
        limbus_reprojection_error(man.model, man.intrinsics, refined, gt_poses[f]));
    m.reprojection_initial += m.frame_reprojection_initial.back();
    m.reprojection_refined += m.frame_reprojection_refined.back();
    m.twists.push_back(state.poses[f].twist);
  }
  m.reprojection_initial /= static_cast<double>(man.frames.size());
  m.reprojection_refined /= static_cast<double>(man.frames.size());
  m.texture_rms = texture_rms_error(state, sc.iris);
  return m;
}

json cmd_synth(const RunOptions& opts) {
  require(opts.out, "--out");
  const ProjectConfig pc = ProjectConfig::load(opts.config_path);
  const double noise = opts.noise.value_or(0.0);
  const std::uint64_t seed = opts.seed.value_or(0);
  ensure_dir(opts.out);
  const DatasetSummary s = make_dataset(pc.synth, noise, seed, opts.out);
  return {{"command", "synth"},   {"dataset", s.directory},       {"frames", s.frames},
          {"noise", s.noise},     {"seed", s.seed},               {"exact_radii", s.exact_radii},
          {"recorded_radii", s.recorded_radii}, {"config_hash", pc.hash()}};
}

json cmd_train(const RunOptions& opts) {
  require(opts.dataset, "--dataset");
  require(opts.out, "--out");
  const ProjectConfig pc = ProjectConfig::load(opts.config_path);
  const TrainConfig config = effective_train_config(pc, opts);
  ensure_dir(opts.out);
  const fs::path out(opts.out);
  TrainOutcome t = train_on_dataset(opts.dataset, config, (out / "loss.csv").string());
  const std::string ckpt = (out / "checkpoint.cfck").string();
  save_checkpoint(t.state, ckpt);
  json report = {{"command", "train"},
                 {"dataset", opts.dataset},
                 {"checkpoint", ckpt},
                 {"steps", t.state.step},
                 {"rays", t.data.rays.size()},
                 {"frames", t.data.frame_count()},
                 {"training_psnr", t.training_psnr},
                 {"seed", config.seed},
                 {"config_hash", pc.hash()},
                 {"texture_decomposition", config.texture_decomposition},
                 {"pose_optimization", config.pose_optimization},
                 {"lambda_radial", config.lambda_radial}};
  write_json_file((out / "train_report.json").string(), report);
  return report;
}

json cmd_render(const RunOptions& opts) {
  require(opts.checkpoint, "--checkpoint");
  require(opts.out, "--out");
  const TrainState state = load_checkpoint(opts.checkpoint);
  ensure_dir(opts.out);
  const CameraIntrinsics intr{50.0, 39.5, 31.5, 80, 64};
  std::vector<PinholeCamera> cams;
  if (opts.eye) {
    const Vec3 target = opts.target.value_or(Vec3(0.5 * (state.scene.box().lo + state.scene.box().hi)));
    cams.push_back(PinholeCamera::look_at(intr, *opts.eye, target));
  } else {
    const int n = opts.orbit > 0 ? opts.orbit : 12;
    const Vec3 center = 0.5 * (state.scene.box().lo + state.scene.box().hi);
    const double radius = 0.5 * (state.config.sampling.near + state.config.sampling.far);
    for (int i = 0; i < n; ++i) {
      const double a = (n == 1 ? 0.0 : -30.0 + 60.0 * i / (n - 1)) * M_PI / 180.0;
      const Vec3 eye = center + radius * Vec3(std::sin(a), 0.0, std::cos(a));
      cams.push_back(PinholeCamera::look_at(intr, eye, center));
    }
  }
  json files = json::array();
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const FieldView v = render_field_view(state.scene, cams[i], state.config.sampling);
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03zu.png", i);
    const std::string color_path = (fs::path(opts.out) / name).string();
    std::snprintf(name, sizeof(name), "accum_%03zu.png", i);
    const std::string acc_path = (fs::path(opts.out) / name).string();
    write_png(color_path, v.color, 16);
    write_png(acc_path, v.accumulation, 8);
    files.push_back({{"color", color_path}, {"accumulation", acc_path}});
  }
  return {{"command", "render"}, {"checkpoint", opts.checkpoint}, {"views", files}};
}

json cmd_eval(const RunOptions& opts) {
  require(opts.checkpoint, "--checkpoint");
  require(opts.dataset, "--dataset");
  const TrainState state = load_checkpoint(opts.checkpoint);
  const EvalMetrics m = evaluate_against_ground_truth(state, opts.dataset);
  const ProjectConfig pc = ProjectConfig::load(opts.config_path);
  json report = m.to_json();
  report["command"] = "eval";
  report["checkpoint"] = opts.checkpoint;
  report["dataset"] = opts.dataset;
  report["seed"] = state.config.seed;
  report["config_hash"] = pc.hash();
  report["checkpoint_config"] = json::parse(state.config.to_json());
  if (!opts.out.empty()) {
    ensure_dir(opts.out);
    const fs::path p = fs::path(opts.out) / "metrics.jsonl";
    std::ofstream os(p, std::ios::app);
    if (!os) throw IoError("cannot append to '" + p.string() + "'");
    os << report.dump() << "\n";
  }
  return report;
}

json cmd_ablate(const RunOptions& opts) {
  require(opts.out, "--out");
  const ProjectConfig pc = ProjectConfig::load(opts.config_path);
  std::vector<double> levels = pc.synth.noise_levels;
  if (opts.noise) levels = {*opts.noise};
  if (levels.empty()) throw ConfigError("ablation needs at least one noise level");
  ensure_dir(opts.out);
  const std::uint64_t seed = opts.seed.value_or(0);

  json rows = json::array();
  std::ofstream csv((fs::path(opts.out) / "ablation.csv").string(), std::ios::trunc);
  if (!csv) throw IoError("cannot write ablation table");
  csv << "noise,arm,ssim,psnr,reprojection_initial_px,reprojection_refined_px\n";
  for (double sigma : levels) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "sigma_%.3f", sigma);
    const fs::path cell = fs::path(opts.out) / tag;
    const std::string data_dir = (cell / "data").string();
    ensure_dir(data_dir);
    make_dataset(pc.synth, sigma, seed, data_dir);
    for (bool pose_opt : {true, false}) {
      RunOptions arm = opts;
      arm.no_pose_opt = !pose_opt;
      const TrainConfig config = effective_train_config(pc, arm);
      const std::string arm_name = pose_opt ? "pose_opt" : "no_pose_opt";
      ensure_dir((cell / arm_name).string());
      TrainOutcome t =
          train_on_dataset(data_dir, config, (cell / arm_name / "loss.csv").string());
      save_checkpoint(t.state, (cell / arm_name / "checkpoint.cfck").string());
      const EvalMetrics m = evaluate_against_ground_truth(t.state, data_dir);
      json row = m.to_json();
      row["noise"] = sigma;
      row["arm"] = arm_name;
      rows.push_back(row);
      csv << sigma << ',' << arm_name << ',' << m.ssim_mean << ',' << m.psnr_mean << ','
          << m.reprojection_initial << ',' << m.reprojection_refined << '\n';
      if (!opts.quiet) {
        std::cerr << "ablate: sigma=" << sigma << " " << arm_name << " ssim=" << m.ssim_mean
                  << " psnr=" << m.psnr_mean << "\n";
      }
    }
  }
  json report = {{"command", "ablate"}, {"rows", rows}, {"seed", seed}, {"config_hash", pc.hash()}};
  write_json_file((fs::path(opts.out) / "ablation.json").string(), report);
  return report;
}

}  // namespace cf
