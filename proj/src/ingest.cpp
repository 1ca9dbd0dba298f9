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

#include "ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "errors.hpp"

namespace cf {

using nlohmann::json;
namespace fs = std::filesystem;

Image load_image_16(const std::string& path, WarningSink* warnings) {
  PngInfo info;
  Image img = read_png(path, &info);
  if (info.bit_depth != 16) {
    const std::string msg = "'" + path + "' is " + std::to_string(info.bit_depth) +
                            "-bit; upscaling to 16-bit loses reflection detail";
    if (warnings) {
      warnings->push_back(msg);
    } else {
      std::cerr << "warning: " << msg << "\n";
    }
  }
  return img;
}

EllipseFit fit_ellipse(std::span<const Vec2> points) {
  if (points.size() < 6) {
    throw GeometryError("ellipse fit needs at least 6 boundary points, got " +
                        std::to_string(points.size()));
  }
  // Normalize for conditioning.
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale += (p - mean).norm();
  scale /= static_cast<double>(points.size());
  if (!(scale > 0.0)) throw GeometryError("ellipse fit: all points coincide");

  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 q = (points[static_cast<std::size_t>(i)] - mean) / scale;
    d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
    d2.row(i) << q.x(), q.y(), 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible()) throw GeometryError("ellipse fit: degenerate point configuration");
  const Eigen::Matrix3d t = -lu.inverse() * s2.transpose();
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int best = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(es.eigenvalues()[k].imag()) > 1e-9 * (1.0 + std::abs(es.eigenvalues()[k].real()))) {
      continue;
    }
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond > 0.0 && (best < 0 || cond > best_cond)) {
      best = k;
      best_cond = cond;
    }
  }
  if (best < 0) throw GeometryError("ellipse fit: no elliptical solution");
  const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = t * a1;
  const double A = a1[0], B = a1[1], C = a1[2], D = a2[0], E = a2[1], F = a2[2];

  Eigen::Matrix2d q;
  q << 2.0 * A, B, B, 2.0 * C;
  const Vec2 c0 = q.fullPivLu().solve(Vec2(-D, -E));
  const double f0 = F + 0.5 * (D * c0.x() + E * c0.y());
  Eigen::Matrix2d shape;
  shape << A, B / 2.0, B / 2.0, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> se(shape);
  const double l0 = se.eigenvalues()[0];  // smaller |eigenvalue| -> major axis
  const double l1 = se.eigenvalues()[1];
  // A conic scaled by -1 is the same ellipse; orient so -f0 / l > 0.
  const double major_sq = -f0 / (std::abs(l0) < std::abs(l1) ? l0 : l1);
  const double minor_sq = -f0 / (std::abs(l0) < std::abs(l1) ? l1 : l0);
  if (!(major_sq > 0.0) || !(minor_sq > 0.0)) {
    throw GeometryError("ellipse fit: degenerate conic");
  }
  const Vec2 axis = se.eigenvectors().col(std::abs(l0) < std::abs(l1) ? 0 : 1);

  EllipseFit fit;
  fit.center = mean + scale * c0;
  fit.major = scale * std::sqrt(major_sq);
  fit.minor = scale * std::sqrt(minor_sq);
  double angle = std::atan2(axis.y(), axis.x());
  angle = std::fmod(angle, M_PI);
  if (angle < 0.0) angle += M_PI;
  fit.rotation = angle;

  double sum = 0.0;
  for (const auto& p : points) {
    const Vec2 u = (p - mean) / scale;
    const double val = A * u.x() * u.x() + B * u.x() * u.y() + C * u.y() * u.y() + D * u.x() +
                       E * u.y() + F;
    const Vec2 grad(2.0 * A * u.x() + B * u.y() + D, B * u.x() + 2.0 * C * u.y() + E);
    const double g = grad.norm();
    const double dist = g > 0.0 ? val / g : 0.0;
    sum += dist * dist;
  }
  fit.residual = scale * std::sqrt(sum / static_cast<double>(points.size()));
  return fit;
}

std::vector<Vec2> mask_boundary(const Image& mask) {
  std::vector<Vec2> pts;
  auto on = [&](int y, int x) {
    if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) return false;
    return mask.at(y, x, 0) > 0.5;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!on(y, x)) continue;
      if (!on(y - 1, x) || !on(y + 1, x) || !on(y, x - 1) || !on(y, x + 1)) {
        pts.emplace_back(x, y);
      }
    }
  }
  return pts;
}

CorneaObservation to_observation(const EllipseFit& fit, int frame, const Image& mask) {
  CorneaObservation obs;
  obs.frame = frame;
  obs.cx = fit.center.x();
  obs.cy = fit.center.y();
  obs.r_img = fit.major;
  obs.minor_radius = fit.minor;
  obs.rotation = fit.rotation;

  const double reach = fit.major + 1.0;
  int x0 = static_cast<int>(std::floor(obs.cx - reach));
  int y0 = static_cast<int>(std::floor(obs.cy - reach));
  int x1 = static_cast<int>(std::ceil(obs.cx + reach));
  int y1 = static_cast<int>(std::ceil(obs.cy + reach));
  if (!mask.empty()) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, mask.width - 1);
    y1 = std::min(y1, mask.height - 1);
  }
  obs.mask.x0 = x0;
  obs.mask.y0 = y0;
  obs.mask.width = std::max(0, x1 - x0 + 1);
  obs.mask.height = std::max(0, y1 - y0 + 1);
  obs.mask.bits.assign(static_cast<std::size_t>(obs.mask.width) * obs.mask.height, 0);

  const double c = std::cos(fit.rotation);
  const double s = std::sin(fit.rotation);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - fit.center.x();
      const double dy = y - fit.center.y();
      const double u = (c * dx + s * dy) / fit.major;
      const double v = (-s * dx + c * dy) / fit.minor;
      if (u * u + v * v > 1.0) continue;
      if (!mask.empty() && !(mask.at(y, x, 0) > 0.5)) continue;
      obs.mask.bits[static_cast<std::size_t>(y - y0) * obs.mask.width + (x - x0)] = 1;
    }
  }
  return obs;
}

namespace {

std::vector<CorneaObservation> read_observations(const std::string& path, CorneaModel* model) {
  const json doc = read_json_file(path);
  if (model && doc.contains("model")) *model = cornea_model_from_json(doc["model"]);
  std::vector<CorneaObservation> out;
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    throw ConfigError("'" + path + "' has no frames array");
  }
  for (const auto& rec : doc["frames"]) out.push_back(observation_from_record(rec));
  return out;
}

}  // namespace

CaptureManifest load_manifest(const std::string& path) {
  fs::path p(path);
  CaptureManifest m;
  if (fs::is_directory(p) && fs::exists(p / "observations.json") && fs::exists(p / "camera.json")) {
    // Simulator layout.
    m.intrinsics = intrinsics_from_json(read_json_file((p / "camera.json").string()));
    const auto obs = read_observations((p / "observations.json").string(), &m.model);
    for (const auto& o : obs) {
      CaptureFrame f;
      f.image_path = (p / "frames" / frame_file_name(o.frame)).string();
      f.mask_path = (p / "masks" / frame_file_name(o.frame)).string();
      f.ellipse = o;
      m.frames.push_back(f);
    }
    if (fs::is_directory(p / "ground_truth")) m.ground_truth_dir = (p / "ground_truth").string();
    return m;
  }
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) {
    throw IoError("'" + path + "' is neither a dataset directory nor a capture manifest");
  }
  const json doc = read_json_file(p.string());
  const fs::path base = p.parent_path();
  try {
    m.intrinsics = intrinsics_from_json(doc.at("camera"));
    if (doc.contains("model")) m.model = cornea_model_from_json(doc["model"]);
    const auto& frames = doc.at("frames");
    int index = 0;
    for (const auto& f : frames) {
      CaptureFrame cf;
      cf.image_path = (base / f.at("image").get<std::string>()).string();
      cf.mask_path = (base / f.at("mask").get<std::string>()).string();
      if (f.contains("ellipse")) {
        json rec = f["ellipse"];
        rec["frame"] = index;
        cf.ellipse = observation_from_record(rec);
      }
      m.frames.push_back(cf);
      ++index;
    }
    if (doc.contains("ground_truth")) {
      m.ground_truth_dir = (base / doc["ground_truth"].get<std::string>()).string();
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad capture manifest '" + p.string() + "': " + e.what());
  }
  if (m.frames.empty()) throw ConfigError("capture manifest lists no frames");
  return m;
}

LoadedCapture load_capture(const std::string& path, WarningSink* warnings) {
  LoadedCapture cap;
  cap.manifest = load_manifest(path);
  for (std::size_t i = 0; i < cap.manifest.frames.size(); ++i) {
    const CaptureFrame& f = cap.manifest.frames[i];
    Image img = load_image_16(f.image_path, warnings);
    Image mask = read_png(f.mask_path);
    if (img.width != cap.manifest.intrinsics.width ||
        img.height != cap.manifest.intrinsics.height) {
      throw ConfigError("'" + f.image_path + "' does not match the camera image size");
    }
    if (mask.width != img.width || mask.height != img.height) {
      throw ConfigError("mask '" + f.mask_path + "' does not match its frame size");
    }
    if (img.channels == 1) {
      Image rgb(img.width, img.height, 3);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
        }
      }
      img = std::move(rgb);
    }
    EllipseFit fit;
    if (f.ellipse) {
      fit.center = Vec2(f.ellipse->cx, f.ellipse->cy);
      fit.major = f.ellipse->r_img;
      // The reflection model uses a circle of radius r_img; the minor axis is
      // metadata only.
      fit.minor = f.ellipse->r_img;
      fit.rotation = 0.0;
    } else {
      const auto boundary = mask_boundary(mask);
      fit = fit_ellipse(boundary);
    }
    CorneaObservation obs = to_observation(fit, static_cast<int>(i), mask);
    if (f.ellipse) {
      obs.minor_radius = f.ellipse->minor_radius;
      obs.rotation = f.ellipse->rotation;
    }
    if (obs.mask.count() == 0 && warnings) {
      warnings->push_back("frame " + std::to_string(i) + " has an empty cornea mask");
    }
    cap.images.push_back(std::move(img));
    cap.observations.push_back(std::move(obs));
  }
  return cap;
}

std::vector<RigidTransform> load_ground_truth_poses(const std::string& ground_truth_dir) {
  const json doc = read_json_file((fs::path(ground_truth_dir) / "trajectory.json").string());
  std::vector<RigidTransform> poses;
  try {
    for (const auto& f : doc.at("frames")) {
      RigidTransform t;
      const auto& rot = f.at("rotation");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(r * 3 + c).get<double>();
      }
      t.translation = vec3_from_json(f.at("translation"), "translation");
      poses.push_back(t);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad ground-truth trajectory: ") + e.what());
  }
  return poses;
}

TrainingSet make_training_set(const LoadedCapture& capture,
                              const std::vector<RigidTransform>* poses) {
  TrainingSet set;
  set.model = capture.manifest.model;
  set.intrinsics = capture.manifest.intrinsics;
  set.observations = capture.observations;
  if (poses && poses->size() != capture.observations.size()) {
    throw ConfigError("ground-truth pose count does not match the frame count");
  }
  const double t_b = set.model.apex_to_base();
  for (std::size_t i = 0; i < capture.observations.size(); ++i) {
    const CorneaObservation& obs = capture.observations[i];
    const RigidTransform pose =
        poses ? (*poses)[i] : place_cornea(set.model, set.intrinsics, obs);
    set.poses.push_back(pose);
    set.pivots.push_back(pose.apply(Vec3(0.0, 0.0, t_b)));
    const auto rays = build_reflected_rays(set.model, set.intrinsics, obs, pose);
    const Image& img = capture.images[i];
    for (const auto& r : rays) {
      set.rays.push_back(r);
      set.targets.emplace_back(img.at(r.pixel_y, r.pixel_x, 0), img.at(r.pixel_y, r.pixel_x, 1),
                               img.at(r.pixel_y, r.pixel_x, 2));
    }
  }
  return set;
}

}  // namespace cf
