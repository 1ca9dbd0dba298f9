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

// Independent reference computations shared by the unit tests and the
// acceptance binary: a bisection root finder and a finite-difference normal
// for the cornea surface, a central-difference check of the training objective
// on small random instances, and ellipse-fit recovery trials.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "geometry.hpp"
#include "ingest.hpp"
#include "training.hpp"

namespace oracle {

using cf::CorneaModel;
using cf::Mat3;
using cf::Vec3;

inline double implicit(const CorneaModel& m, const Vec3& p) {
  return (1.0 - m.eccentricity) * p.z() * p.z() - 2.0 * m.apex_radius * p.z() +
         p.x() * p.x() + p.y() * p.y();
}

// Smaller root of (1-e) z^2 - 2 R z + r^2 by bisection on [0, R/(1-e)], where
// the polynomial falls from r^2 >= 0 to r^2 - R^2/(1-e) < 0.
inline double bisect_surface_z(const CorneaModel& m, double r) {
  const double k = 1.0 - m.eccentricity;
  auto f = [&](double z) { return k * z * z - 2.0 * m.apex_radius * z + r * r; };
  double lo = 0.0, hi = m.apex_radius / k;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Outward normal from central differences of the implicit function.
inline Vec3 fd_normal(const CorneaModel& m, const Vec3& p) {
  const double h = 1e-5;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = (implicit(m, p + e) - implicit(m, p - e)) / (2.0 * h);
  }
  return g.normalized();
}

// Nearest in-section crossing of the surface along a canonical-frame ray, by a
// dense sign-change search followed by bisection.
inline bool bisect_hit(const CorneaModel& m, const Vec3& o, const Vec3& d, double s_max,
                       Vec3& out) {
  const double t_b = bisect_surface_z(m, m.base_radius);
  const int steps = 4000;
  auto f = [&](double s) { return implicit(m, o + s * d); };
  double prev_s = 0.0, prev_f = f(0.0);
  for (int i = 1; i <= steps; ++i) {
    const double s = s_max * i / steps;
    const double fs = f(s);
    if ((prev_f > 0.0) != (fs > 0.0)) {
      double lo = prev_s, hi = s;
      const bool lo_pos = prev_f > 0.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((f(mid) > 0.0) == lo_pos ? lo : hi) = mid;
      }
      const Vec3 p = o + 0.5 * (lo + hi) * d;
      if (p.z() >= 0.0 && p.z() <= t_b) {
        out = p;
        return true;
      }
    }
    prev_s = s;
    prev_f = fs;
  }
  return false;
}

// Well-conditioned angle between two vectors.
inline double angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline CorneaModel random_model(std::mt19937_64& g) {
  std::uniform_real_distribution<double> ue(0.05, 0.9), ur(6.0, 9.0), ul(3.0, 6.5);
  CorneaModel m;
  m.eccentricity = ue(g);
  m.apex_radius = ur(g);
  m.base_radius = std::min(ul(g), 0.9 * m.apex_radius / std::sqrt(1.0 - m.eccentricity));
  return m;
}

inline Mat3 random_rotation(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(g), n(g), n(g), n(g));
  return q.normalized().toRotationMatrix();
}

// Worst deviations over a randomized geometry comparison.
struct GeometryReport {
  int cases = 0;
  int hits = 0;
  int mismatched_hits = 0;  // hit/miss disagreements with the oracle
  double surface_z = 0.0;   // |z - bisection|
  double residual = 0.0;    // |F(r, z)|
  double normal = 0.0;      // |n - finite-difference normal|
  double hit_point = 0.0;   // mm
  double hit_normal = 0.0;
  double reflect = 0.0;     // max of norm, involution, and angle errors

  double worst() const {
    return std::max({surface_z, residual, normal, hit_point, hit_normal, reflect});
  }
};

inline GeometryReport geometry_suite(int cases, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  GeometryReport rep;
  rep.cases = cases;
  for (int i = 0; i < cases; ++i) {
    const CorneaModel m = random_model(g);

    // surface_z and surface_normal.
    const double r = m.base_radius * u(g);
    const double phi = 2.0 * M_PI * u(g);
    const double z = cf::surface_z(m, r);
    rep.surface_z = std::max(rep.surface_z, std::abs(z - bisect_surface_z(m, r)));
    const Vec3 p(r * std::cos(phi), r * std::sin(phi), z);
    rep.residual = std::max(rep.residual, std::abs(implicit(m, p)));
    rep.normal = std::max(rep.normal, (cf::surface_normal(m, p) - fd_normal(m, p)).norm());

    // intersect under a random placement.
    cf::RigidTransform pose;
    pose.rotation = random_rotation(g);
    pose.translation = Vec3(u(g) - 0.5, u(g) - 0.5, u(g) - 0.5) * 200.0;
    const double ra = 0.95 * m.base_radius * std::sqrt(u(g));
    const double pa = 2.0 * M_PI * u(g);
    const Vec3 target(ra * std::cos(pa), ra * std::sin(pa), cf::surface_z(m, ra));
    const Vec3 o_can(20.0 * (u(g) - 0.5), 20.0 * (u(g) - 0.5), -15.0 - 20.0 * u(g));
    const Vec3 d_can = (target - o_can).normalized();
    cf::Ray ray;
    ray.origin = pose.apply(o_can);
    ray.direction = pose.apply_direction(d_can);
    Vec3 expect;
    const bool want = bisect_hit(m, o_can, d_can, (target - o_can).norm() + 30.0, expect);
    const auto hit = cf::intersect(m, ray, pose);
    if (hit.has_value() != want) {
      ++rep.mismatched_hits;
    } else if (want) {
      ++rep.hits;
      rep.hit_point = std::max(rep.hit_point, (hit->point - pose.apply(expect)).norm());
      rep.hit_normal = std::max(
          rep.hit_normal, (hit->normal - pose.apply_direction(fd_normal(m, expect))).norm());
    }

    // reflect.
    Vec3 d(nd(g), nd(g), nd(g)), n(nd(g), nd(g), nd(g));
    d.normalize();
    n.normalize();
    if (d.dot(n) > 0.0) n = -n;
    if (std::abs(d.dot(n)) > 1e-3) {
      const Vec3 out = cf::reflect(d, n);
      rep.reflect = std::max({rep.reflect, std::abs(out.norm() - 1.0),
                              (cf::reflect(out, -n) - d).norm(),
                              std::abs(angle(-d, n) - angle(out, n))});
    }
  }
  return rep;
}

// A small random training problem: two or three frames of cornea rays seen
// by a camera at the origin, a random scene grid whose box contains every
// sample, a random texture, and nonzero pose deltas.
struct GradientInstance {
  cf::TrainState state;
  std::vector<cf::ReflectedRay> rays;
  std::vector<Vec3> targets;
  cf::BatchNoise noise;
};

inline GradientInstance make_gradient_instance(std::mt19937_64& g, cf::PoseModel pose_model,
                                               cf::CompositionMode mode) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> res(3, 8);

  cf::TrainConfig c;
  c.grid_resolution = {res(g), res(g), res(g)};
  c.bbox = cf::Aabb{Vec3(-45.0, -45.0, -15.0), Vec3(45.0, 45.0, 65.0)};
  c.texture_resolution = 3 + static_cast<int>(u(g) * 5);
  c.sampling = cf::SamplingSpec{1.0, 30.0, 4 + static_cast<int>(u(g) * 13)};
  c.lambda_radial = 0.05 + 0.5 * u(g);
  c.lambda_center = 10.0 + 1000.0 * u(g);
  c.composition = mode;
  c.pose_model = pose_model;
  c.seed = g();

  const CorneaModel model;
  const int frames = 2 + static_cast<int>(u(g) * 2);
  std::vector<Vec3> pivots;
  std::vector<cf::RigidTransform> placements;
  for (int f = 0; f < frames; ++f) {
    const Vec3 center(6.0 * (u(g) - 0.5), 6.0 * (u(g) - 0.5), 38.0 + 4.0 * u(g));
    pivots.push_back(center);
    placements.push_back(cf::cornea_pose(model, center, -center.normalized()));
  }
  cf::TrainingSet data;
  data.model = model;
  data.pivots = pivots;
  data.poses = placements;
  data.observations.resize(frames);
  GradientInstance inst;
  inst.state = cf::TrainState::initialize(c, data);

  auto& sp = inst.state.scene.params();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    sp[i] = (i % cf::SceneField::kChannels == 0) ? -3.0 + nd(g) : nd(g);
  }
  for (double& v : inst.state.texture.params()) v = nd(g);
  for (cf::PoseDelta& p : inst.state.poses) {
    for (int k = 0; k < 3; ++k) p.twist[k] = 0.02 * (u(g) - 0.5);
    for (int k = 3; k < 6; ++k) p.twist[k] = 0.4 * (u(g) - 0.5);
  }

  // Rays through points well inside each section, so small pose moves never
  // push a pixel off the cornea.
  const int count = 1 + static_cast<int>(u(g) * 4);
  for (int i = 0; i < count; ++i) {
    const int f = i % frames;
    const double r = 0.5 * model.base_radius * std::sqrt(u(g));
    const double phi = 2.0 * M_PI * u(g);
    const Vec3 on(r * std::cos(phi), r * std::sin(phi), cf::surface_z(model, r));
    const Vec3 view = placements[f].apply(on).normalized();
    cf::Ray cam;
    cam.direction = view;
    const auto hit = cf::intersect(model, cam, placements[f]);
    if (!hit) continue;
    cf::ReflectedRay ray;
    ray.origin = hit->point;
    ray.normal = hit->normal;
    ray.direction = cf::reflect(view, hit->normal).normalized();
    ray.view = view;
    const double dr = 0.9 * std::sqrt(u(g));
    const double da = 2.0 * M_PI * u(g);
    ray.disk = cf::Vec2(dr * std::cos(da), dr * std::sin(da));
    ray.frame = f;
    inst.rays.push_back(ray);
    inst.targets.emplace_back(u(g), u(g), u(g));
  }
  cf::Rng rng(g());
  inst.noise = cf::draw_batch_noise(rng, inst.rays.size(), c.sampling.samples);
  return inst;
}

struct GradientReport {
  int parameters = 0;
  int compared = 0;             // components large enough for a relative test
  int failures = 0;
  double worst_relative = 0.0;  // over the compared components
};

// Compares every analytic derivative with a central difference: raw field
// parameters step by 1e-4, twists by 1e-6. Components of magnitude at least
// 1e-6 must agree to `tolerance` relative error; smaller ones to 1e-9 absolute.
inline GradientReport check_gradients(const GradientInstance& inst, double tolerance) {
  const auto loss = [&](const cf::TrainState& s) {
    return cf::evaluate_objective(s, inst.rays, inst.targets, inst.noise, nullptr, false).total;
  };
  cf::Gradients grads;
  grads.reset(inst.state);
  cf::evaluate_objective(inst.state, inst.rays, inst.targets, inst.noise, &grads, true);

  GradientReport rep;
  const auto compare = [&](double analytic, double numeric) {
    ++rep.parameters;
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-6) {
      // Too small for a meaningful ratio: difference-quotient noise dominates.
      if (diff > 1e-9) ++rep.failures;
      return;
    }
    const double rel = diff / scale;
    ++rep.compared;
    rep.worst_relative = std::max(rep.worst_relative, rel);
    if (rel >= tolerance) ++rep.failures;
  };

  cf::TrainState work = inst.state;
  const double h = 1e-4;
  auto& sp = work.scene.params();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const double v = sp[i];
    sp[i] = v + h;
    const double lp = loss(work);
    sp[i] = v - h;
    const double lm = loss(work);
    sp[i] = v;
    compare(grads.scene[i], (lp - lm) / (2.0 * h));
  }
  auto& tp = work.texture.params();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    const double v = tp[i];
    tp[i] = v + h;
    const double lp = loss(work);
    tp[i] = v - h;
    const double lm = loss(work);
    tp[i] = v;
    compare(grads.texture[i], (lp - lm) / (2.0 * h));
  }
  const double hp = 1e-6;
  for (std::size_t f = 0; f < work.poses.size(); ++f) {
    for (int k = 0; k < 6; ++k) {
      const double v = work.poses[f].twist[k];
      work.poses[f].twist[k] = v + hp;
      const double lp = loss(work);
      work.poses[f].twist[k] = v - hp;
      const double lm = loss(work);
      work.poses[f].twist[k] = v;
      compare(grads.poses[f][k], (lp - lm) / (2.0 * hp));
    }
  }
  return rep;
}

// Points on an ellipse with semi-axes (a, b), major axis at `rotation` from +x.
inline std::vector<cf::Vec2> ellipse_points(const cf::Vec2& center, double a, double b,
                                            double rotation, int count, double phase = 0.0) {
  std::vector<cf::Vec2> pts;
  const double c = std::cos(rotation), s = std::sin(rotation);
  for (int i = 0; i < count; ++i) {
    const double t = phase + 2.0 * M_PI * i / count;
    const double u = a * std::cos(t), v = b * std::sin(t);
    pts.emplace_back(center.x() + c * u - s * v, center.y() + s * u + c * v);
  }
  return pts;
}

// Rotation difference modulo pi.
inline double axis_angle_error(double a, double b) {
  const double d = std::fmod(std::abs(a - b), M_PI);
  return std::min(d, M_PI - d);
}

struct EllipseReport {
  double exact = 0.0;         // worst parameter error on exact points
  double jitter_center = 0.0; // worst center error over jittered trials
  int trials = 0;
};

// Exact recovery on random ellipses, then `trials` jittered 30 px irises
// (radius 15) with uniform point noise of amplitude `epsilon` per coordinate.
inline EllipseReport ellipse_suite(int trials, double epsilon, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EllipseReport rep;
  for (int i = 0; i < 200; ++i) {
    const cf::Vec2 c(500.0 * u(g), 400.0 * u(g));
    const double a = 3.0 + 40.0 * u(g);
    const double b = a * (0.3 + 0.65 * u(g));
    const double rot = M_PI * u(g);
    const auto pts = ellipse_points(c, a, b, rot, 8 + static_cast<int>(u(g) * 200), u(g));
    const cf::EllipseFit f = cf::fit_ellipse(pts);
    rep.exact = std::max({rep.exact, (f.center - c).norm(), std::abs(f.major - a),
                          std::abs(f.minor - b), axis_angle_error(f.rotation, rot)});
  }
  for (int i = 0; i < trials; ++i) {
    const cf::Vec2 c(100.0 + 300.0 * u(g), 100.0 + 200.0 * u(g));
    auto pts = ellipse_points(c, 15.0, 15.0 * (0.7 + 0.3 * u(g)), M_PI * u(g), 90, u(g));
    for (auto& p : pts) p += epsilon * cf::Vec2(2.0 * u(g) - 1.0, 2.0 * u(g) - 1.0);
    const cf::EllipseFit f = cf::fit_ellipse(pts);
    rep.jitter_center = std::max(rep.jitter_center, (f.center - c).norm());
    ++rep.trials;
  }
  return rep;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace oracle
