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

// Cornea geometry.
//
// The cornea is a section of the ellipsoid (1-e) z^2 - 2 R z + x^2 + y^2 = 0
// in a canonical frame whose apex sits at the origin and whose section opens
// toward +z; the outward normal at the apex is (0,0,-1). The section ends at
// the base plane z = t_b, where the base circle has radius r_L.
//
// World units are millimeters. The capture camera sits at the world origin,
// looks down +z, and image y grows downward.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace cf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CorneaModel {
  double eccentricity = 0.5;
  double apex_radius = 7.8;   // mm, radius of curvature at the apex
  double base_radius = 5.5;   // mm, r_L

  void validate() const;
  // t_b: the apex-to-base distance implied by the other three parameters.
  double apex_to_base() const;
};

struct CameraIntrinsics {
  double focal = 1100.0;  // pixels
  double cx = 199.5;
  double cy = 149.5;
  int width = 400;
  int height = 300;

  void validate() const;
  // Unit direction (camera frame) of the ray through pixel (y, x).
  Vec3 pixel_direction(double y, double x) const;
  // Pixel (y, x) of a camera-frame point with z > 0.
  Vec2 project(const Vec3& p) const;
};

// Binary mask over a crop window of the full image.
struct CropMask {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int y, int x) const {
    if (x < x0 || y < y0 || x >= x0 + width || y >= y0 + height) return false;
    return bits[static_cast<size_t>(y - y0) * width + (x - x0)] != 0;
  }
  std::size_t count() const;
};

struct CorneaObservation {
  double cx = 0.0;
  double cy = 0.0;
  double r_img = 0.0;  // major radius of the projected limbus ellipse
  // Ellipse metadata; not used by the reflection model.
  double minor_radius = 0.0;
  double rotation = 0.0;
  int frame = 0;
  CropMask mask;

  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

struct ReflectedRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Vec3 normal = -Vec3::UnitZ();
  Vec3 view = Vec3::UnitZ();  // unit camera ray of the pixel (camera at the origin)
  int pixel_y = 0;
  int pixel_x = 0;
  Vec2 disk = Vec2::Zero();  // (py, px) eye-disk coordinate
  int frame = 0;
};

// Rigid transform x -> rotation * x + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }
  RigidTransform inverse() const;
  RigidTransform then(const RigidTransform& next) const;
};

struct SurfaceHit {
  Vec3 point;
  Vec3 normal;
  double t = 0.0;
};

// Residual of the implicit surface equation at a canonical-frame point.
double surface_residual(const CorneaModel& model, const Vec3& p);

// Smaller non-negative root z of (1-e) z^2 - 2 R z + r^2 = 0, 0 <= r <= r_L.
double surface_z(const CorneaModel& model, double r);

// Outward unit normal at a canonical-frame surface point.
Vec3 surface_normal(const CorneaModel& model, const Vec3& point);

// Nearest forward hit of `ray` (world frame) on the cornea section placed by
// `pose` (canonical -> world). Point and normal are returned in world frame.
std::optional<SurfaceHit> intersect(const CorneaModel& model, const Ray& ray,
                                    const RigidTransform& pose = {});

// Mirror reflection d - 2 (n.d) n. Requires d.n < 0.
Vec3 reflect(const Vec3& d, const Vec3& n);

// Weak-perspective depth r_L f / r_img.
double depth_from_radius(const CorneaModel& model,
                         const CameraIntrinsics& intr, double r_img);

// ((y - c_y) / r_img, (x - c_x) / r_img); throws if outside the unit disk.
Vec2 eye_projection(const CorneaObservation& obs, double y, double x);

// Canonical -> world placement of a cornea with its base center at `center`
// and its apex normal pointing along `gaze` (unit, away from the eye).
RigidTransform cornea_pose(const CorneaModel& model, const Vec3& center,
                           const Vec3& gaze);

// Base-center position implied by an observation: the image center
// back-projected to the weak-perspective depth.
Vec3 observed_center(const CorneaModel& model, const CameraIntrinsics& intr,
                     const CorneaObservation& obs);

// Initial placement from an observation: base center at observed_center,
// apex normal facing the camera.
RigidTransform place_cornea(const CorneaModel& model,
                            const CameraIntrinsics& intr,
                            const CorneaObservation& obs);

// One reflected ray per masked pixel whose eye-disk coordinate lies in the
// unit disk and whose camera ray hits the placed cornea. Ordered row-major.
std::vector<ReflectedRay> build_reflected_rays(const CorneaModel& model,
                                               const CameraIntrinsics& intr,
                                               const CorneaObservation& obs,
                                               const RigidTransform& pose);

// Rotation taking unit vector `from` onto unit vector `to`.
Mat3 rotation_between(const Vec3& from, const Vec3& to);

// A posed pinhole camera; camera frame looks down +z with image y downward.
struct PinholeCamera {
  CameraIntrinsics intrinsics;
  RigidTransform camera_to_world;

  Ray ray(double y, double x) const;
  // Camera at `eye` looking at `target`; `up` is the approximate world up
  // (image y then points along -up).
  static PinholeCamera look_at(const CameraIntrinsics& intr, const Vec3& eye,
                               const Vec3& target, const Vec3& up = Vec3(0.0, -1.0, 0.0));
};

}  // namespace cf
