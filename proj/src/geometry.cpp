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

#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "errors.hpp"

namespace cf {

void CorneaModel::validate() const {
  if (!(eccentricity > 0.0 && eccentricity < 1.0)) {
    throw ArgumentError("cornea eccentricity must lie in (0, 1), got " +
                        std::to_string(eccentricity));
  }
  if (!(apex_radius > 0.0) || !(base_radius > 0.0)) {
    throw ArgumentError("cornea radii must be positive");
  }
  // The base circle must fit on the ellipsoid: R^2 >= (1-e) r_L^2.
  if (apex_radius * apex_radius < (1.0 - eccentricity) * base_radius * base_radius) {
    throw GeometryError("base radius exceeds the ellipsoid's widest section");
  }
}

double CorneaModel::apex_to_base() const { return surface_z(*this, base_radius); }

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0)) throw ArgumentError("focal length must be positive");
  if (width <= 0 || height <= 0) throw ArgumentError("image size must be positive");
  if (cx < 0.0 || cy < 0.0 || cx > width - 1 || cy > height - 1) {
    throw ArgumentError("principal point lies outside the image");
  }
}

Vec3 CameraIntrinsics::pixel_direction(double y, double x) const {
  return Vec3((x - cx) / focal, (y - cy) / focal, 1.0).normalized();
}

Vec2 CameraIntrinsics::project(const Vec3& p) const {
  return Vec2(focal * p.y() / p.z() + cy, focal * p.x() / p.z() + cx);
}

std::size_t CropMask::count() const {
  return static_cast<std::size_t>(std::count_if(
      bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

void CorneaObservation::validate() const {
  if (!(r_img > 0.0)) throw ArgumentError("observation radius must be positive");
  if (mask.bits.size() != static_cast<size_t>(mask.width) * mask.height) {
    throw ArgumentError("observation mask size does not match its window");
  }
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::then(const RigidTransform& next) const {
  RigidTransform out;
  out.rotation = next.rotation * rotation;
  out.translation = next.rotation * translation + next.translation;
  return out;
}

double surface_residual(const CorneaModel& model, const Vec3& p) {
  const double k = 1.0 - model.eccentricity;
  return k * p.z() * p.z() - 2.0 * model.apex_radius * p.z() + p.x() * p.x() +
         p.y() * p.y();
}

double surface_z(const CorneaModel& model, double r) {
  model.validate();
  if (r < 0.0) throw ArgumentError("surface_z: negative radius");
  if (r > model.base_radius) {
    throw GeometryError("surface_z: radius " + std::to_string(r) +
                        " mm lies outside the corneal section");
  }
  const double R = model.apex_radius;
  const double disc = R * R - (1.0 - model.eccentricity) * r * r;
  if (disc < 0.0) throw GeometryError("surface_z: negative discriminant");
  // Product-of-roots form of the smaller root; stable as r -> 0.
  return r * r / (R + std::sqrt(disc));
}

Vec3 surface_normal(const CorneaModel& model, const Vec3& point) {
  const double scale = std::max(1.0, point.squaredNorm());
  if (std::abs(surface_residual(model, point)) > 1e-6 * scale) {
    throw ArgumentError("surface_normal: point is not on the cornea surface");
  }
  const Vec3 g(2.0 * point.x(), 2.0 * point.y(),
               2.0 * (1.0 - model.eccentricity) * point.z() -
                   2.0 * model.apex_radius);
  return g.normalized();
}

std::optional<SurfaceHit> intersect(const CorneaModel& model, const Ray& ray,
                                    const RigidTransform& pose) {
  const double k = 1.0 - model.eccentricity;
  const double R = model.apex_radius;
  const double t_b = model.apex_to_base();

  const Mat3 to_canonical = pose.rotation.transpose();
  const Vec3 o = to_canonical * (ray.origin - pose.translation);
  const Vec3 d = to_canonical * ray.direction;

  const double a = d.x() * d.x() + d.y() * d.y() + k * d.z() * d.z();
  const double b = 2.0 * (o.x() * d.x() + o.y() * d.y() + k * o.z() * d.z() -
                          R * d.z());
  const double c = o.x() * o.x() + o.y() * o.y() + k * o.z() * o.z() -
                   2.0 * R * o.z();
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;

  double roots[2];
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(sq, b));
  if (q == 0.0) {
    roots[0] = roots[1] = 0.0;
  } else {
    roots[0] = q / a;
    roots[1] = c / q;
  }
  if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);

  // Section bounds allow for rounding in o + s d, which is large relative to
  // the section when the ray starts far away.
  const double tol = 1e-12 * (1.0 + o.norm());
  for (double s : roots) {
    if (s < 0.0) continue;
    const Vec3 p = o + s * d;
    if (p.z() < -tol || p.z() > t_b + tol) continue;
    const Vec3 g(2.0 * p.x(), 2.0 * p.y(), 2.0 * k * p.z() - 2.0 * R);
    SurfaceHit hit;
    hit.t = s;
    hit.point = pose.apply(p);
    hit.normal = pose.apply_direction(g.normalized());
    return hit;
  }
  return std::nullopt;
}

Vec3 reflect(const Vec3& d, const Vec3& n) {
  const double dn = n.dot(d);
  if (dn >= 0.0) {
    throw GeometryError("reflect: ray does not face the surface (grazing or backface)");
  }
  return d - 2.0 * dn * n;
}

double depth_from_radius(const CorneaModel& model,
                         const CameraIntrinsics& intr, double r_img) {
  if (!(r_img > 0.0)) throw ArgumentError("depth_from_radius: r_img must be positive");
  return model.base_radius * intr.focal / r_img;
}

Vec2 eye_projection(const CorneaObservation& obs, double y, double x) {
  const Vec2 p((y - obs.cy) / obs.r_img, (x - obs.cx) / obs.r_img);
  if (p.squaredNorm() > 1.0) {
    throw GeometryError("eye_projection: pixel lies outside the cornea");
  }
  return p;
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  const Vec3 a = from.normalized();
  const Vec3 b = to.normalized();
  const double c = a.dot(b);
  if (c < -1.0 + 1e-12) {
    Vec3 axis = a.cross(Vec3::UnitX());
    if (axis.squaredNorm() < 1e-12) axis = a.cross(Vec3::UnitY());
    return Eigen::AngleAxisd(M_PI, axis.normalized()).toRotationMatrix();
  }
  return Eigen::Quaterniond::FromTwoVectors(a, b).toRotationMatrix();
}

Ray PinholeCamera::ray(double y, double x) const {
  Ray r;
  r.origin = camera_to_world.translation;
  r.direction = camera_to_world.rotation * intrinsics.pixel_direction(y, x);
  return r;
}

PinholeCamera PinholeCamera::look_at(const CameraIntrinsics& intr, const Vec3& eye,
                                     const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = (-up).cross(z);
  if (x.squaredNorm() < 1e-12) throw ArgumentError("look_at: up is parallel to the view");
  x.normalize();
  const Vec3 y = z.cross(x);
  PinholeCamera cam;
  cam.intrinsics = intr;
  cam.camera_to_world.rotation.col(0) = x;
  cam.camera_to_world.rotation.col(1) = y;
  cam.camera_to_world.rotation.col(2) = z;
  cam.camera_to_world.translation = eye;
  return cam;
}

RigidTransform cornea_pose(const CorneaModel& model, const Vec3& center,
                           const Vec3& gaze) {
  RigidTransform pose;
  // Canonical -z is the apex normal.
  pose.rotation = rotation_between(-Vec3::UnitZ(), gaze);
  pose.translation = center - pose.rotation * Vec3(0.0, 0.0, model.apex_to_base());
  return pose;
}

Vec3 observed_center(const CorneaModel& model, const CameraIntrinsics& intr,
                     const CorneaObservation& obs) {
  const double depth = depth_from_radius(model, intr, obs.r_img);
  return Vec3(depth * (obs.cx - intr.cx) / intr.focal,
              depth * (obs.cy - intr.cy) / intr.focal, depth);
}

RigidTransform place_cornea(const CorneaModel& model,
                            const CameraIntrinsics& intr,
                            const CorneaObservation& obs) {
  const Vec3 center = observed_center(model, intr, obs);
  return cornea_pose(model, center, -center.normalized());
}

std::vector<ReflectedRay> build_reflected_rays(const CorneaModel& model,
                                               const CameraIntrinsics& intr,
                                               const CorneaObservation& obs,
                                               const RigidTransform& pose) {
  obs.validate();
  std::vector<ReflectedRay> rays;
  const CropMask& m = obs.mask;
  for (int y = m.y0; y < m.y0 + m.height; ++y) {
    for (int x = m.x0; x < m.x0 + m.width; ++x) {
      if (!m.at(y, x)) continue;
      const Vec2 p((y - obs.cy) / obs.r_img, (x - obs.cx) / obs.r_img);
      if (p.squaredNorm() > 1.0) continue;
      Ray cam;
      cam.direction = intr.pixel_direction(y, x);
      const auto hit = intersect(model, cam, pose);
      if (!hit || hit->normal.dot(cam.direction) >= 0.0) continue;
      ReflectedRay r;
      r.origin = hit->point;
      r.normal = hit->normal;
      r.direction = reflect(cam.direction, hit->normal).normalized();
      r.view = cam.direction;
      r.pixel_y = y;
      r.pixel_x = x;
      r.disk = p;
      r.frame = obs.frame;
      rays.push_back(r);
    }
  }
  return rays;
}

}  // namespace cf
