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
#include <random>
#include <vector>

#include "errors.hpp"
#include "fields.hpp"

using namespace cf;

namespace {

bool grad_close(double analytic, double numeric, double rel = 1e-4, double floor = 1e-9) {
  const double diff = std::abs(analytic - numeric);
  return diff <= floor || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

SceneField random_field(std::mt19937_64& g, std::array<int, 3> res, const Aabb& box) {
  SceneField f(box, res);
  std::normal_distribution<double> n;
  auto& p = f.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = (i % SceneField::kChannels == 0) ? -3.0 + 1.5 * n(g) : n(g);
  }
  return f;
}

}  // namespace

TEST_CASE("activations") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(softplus(100.0) == 100.0);
  CHECK(softplus(-100.0) > 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("scene field evaluation rules") {
  const Aabb box{Vec3(-1, -2, -3), Vec3(1, 2, 3)};
  SceneField f(box, {3, 4, 5});
  const FieldSample s = f.eval(Vec3(0.1, 0.2, 0.3), Vec3(0, 1, 0));
  CHECK(s.density == doctest::Approx(0.6931471806).epsilon(1e-10));
  CHECK((s.color - Vec3::Constant(0.5)).norm() == 0.0);

  const FieldSample out = f.eval(Vec3(1.5, 0.0, 0.0));
  CHECK(out.density == 0.0);
  CHECK(out.color.norm() == 0.0);

  // Exact grid vertex: the vertex's own activations.
  std::mt19937_64 g(3);
  SceneField r = random_field(g, {3, 4, 5}, box);
  const std::size_t off = r.vertex_offset(1, 2, 3);
  const Vec3 vertex(box.lo.x() + 1.0 * 2.0 / 2.0, box.lo.y() + 2.0 * 4.0 / 3.0,
                    box.lo.z() + 3.0 * 6.0 / 4.0);
  const FieldSample v = r.eval(vertex);
  CHECK(v.density == doctest::Approx(softplus(r.params()[off])).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    CHECK(v.color[c] == doctest::Approx(sigmoid(r.params()[off + 1 + c])).epsilon(1e-12));
  }
  // Color does not depend on direction.
  const Vec3 q(0.3, -0.7, 1.1);
  CHECK(r.eval(q, Vec3::UnitX()).color == r.eval(q, Vec3::UnitZ()).color);
}

TEST_CASE("texture field evaluation rules") {
  TextureField t(5);
  CHECK((t.eval(Vec2(0.3, -0.4)) - Vec3::Constant(0.5)).norm() == 0.0);
  CHECK_THROWS_AS(t.eval(Vec2(0.8, 0.8)), Error);

  // Vertex (row 2, col 3) sits at (py, px) = (0, 0.5).
  const std::size_t off = t.vertex_offset(2, 3);
  t.params()[off] = 1.7;
  t.params()[off + 1] = -0.4;
  t.params()[off + 2] = 3.0;
  CHECK((t.vertex_position(2, 3) - Vec2(0.0, 0.5)).norm() < 1e-15);
  const Vec3 at = t.eval(Vec2(0.0, 0.5));
  CHECK(at[0] == doctest::Approx(sigmoid(1.7)).epsilon(1e-14));
  CHECK(at[1] == doctest::Approx(sigmoid(-0.4)).epsilon(1e-14));
  CHECK(at[2] == doctest::Approx(sigmoid(3.0)).epsilon(1e-14));

  // Midway between raw 0 (col 2) and raw 8 (col 3) along one row.
  TextureField m(5);
  const std::size_t o3 = m.vertex_offset(2, 3);
  for (int c = 0; c < 3; ++c) m.params()[o3 + c] = 8.0;
  const Vec3 mid = m.eval(Vec2(0.0, 0.25));
  for (int c = 0; c < 3; ++c) CHECK(mid[c] == doctest::Approx(sigmoid(4.0)).epsilon(1e-14));
}

TEST_CASE("composite quadrature") {
  // No density: nothing accumulates.
  {
    const std::vector<double> s{0.0, 0.0, 0.0}, d{1.0, 1.0, 1.0};
    const std::vector<Vec3> c{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const RenderResult r = composite(s, c, d);
    CHECK(r.color.norm() == 0.0);
    CHECK(r.accumulation == 0.0);
  }
  // One opaque sample.
  {
    const std::vector<double> s{1e6}, d{1.0};
    const std::vector<Vec3> c{Vec3(0.2, 0.4, 0.6)};
    const RenderResult r = composite(s, c, d);
    CHECK((r.color - c[0]).norm() < 1e-15);
    CHECK(r.accumulation == doctest::Approx(1.0).epsilon(1e-15));
  }
  // Two half-opaque samples.
  {
    const std::vector<double> s{std::log(2.0), std::log(2.0) / 2.0}, d{1.0, 2.0};
    const Vec3 c1(0.8, 0.1, 0.3), c2(0.2, 0.9, 0.5);
    const std::vector<Vec3> c{c1, c2};
    const RenderResult r = composite(s, c, d);
    CHECK((r.color - (0.5 * c1 + 0.25 * c2)).norm() < 1e-15);
    CHECK(r.accumulation == doctest::Approx(0.75).epsilon(1e-15));
  }
  // Splitting a segment of constant density and color changes nothing.
  {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const double sigma = 5.0 * u(g), delta = u(g), split = u(g);
      const Vec3 col(u(g), u(g), u(g));
      const Vec3 before(u(g), u(g), u(g));
      const std::vector<double> s1{0.7, sigma}, d1{0.3, delta};
      const std::vector<Vec3> c1{before, col};
      const std::vector<double> s2{0.7, sigma, sigma}, d2{0.3, split * delta, (1 - split) * delta};
      const std::vector<Vec3> c2{before, col, col};
      const RenderResult a = composite(s1, c1, d1), b = composite(s2, c2, d2);
      REQUIRE((a.color - b.color).norm() < 1e-12);
      REQUIRE(std::abs(a.accumulation - b.accumulation) < 1e-12);
    }
  }
  CHECK_THROWS_AS(composite(std::vector<double>{1.0}, std::vector<Vec3>{},
                            std::vector<double>{1.0}),
                  Error);
}

TEST_CASE("volume_render basics") {
  const Aabb box{Vec3(-5, -5, 0), Vec3(5, 5, 10)};
  SamplingSpec sampling{0.0, 10.0, 16};
  // Far below zero raw density renders as empty.
  SceneField empty(box, {4, 4, 4}, -800.0, 0.0);
  const RenderResult e = volume_render(empty, Vec3::Zero(), Vec3::UnitZ(), sampling);
  CHECK(e.color.norm() == 0.0);
  CHECK(e.accumulation == 0.0);
  // A ray that never enters the box.
  SceneField dense(box, {4, 4, 4}, 5.0, 1.0);
  const RenderResult miss =
      volume_render(dense, Vec3(20, 0, 0), Vec3::UnitZ(), sampling);
  CHECK(miss.accumulation == 0.0);
  // Bounds and counts.
  CHECK_THROWS_AS(volume_render(dense, Vec3::Zero(), Vec3::UnitZ(), SamplingSpec{5.0, 5.0, 4}),
                  Error);
  CHECK_THROWS_AS(volume_render(dense, Vec3::Zero(), Vec3::UnitZ(), SamplingSpec{0.0, 5.0, 0}),
                  Error);
  const std::vector<double> short_jitter{0.5};
  CHECK_THROWS_AS(volume_render(dense, Vec3::Zero(), Vec3::UnitZ(), sampling, short_jitter),
                  Error);
  // Range of outputs.
  std::mt19937_64 g(9);
  SceneField r = random_field(g, {5, 5, 5}, box);
  for (auto& v : r.params()) v *= 3.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 o(4 * u(g), 4 * u(g), -1.0);
    const Vec3 d = Vec3(0.2 * u(g), 0.2 * u(g), 1.0).normalized();
    const RenderResult res = volume_render(r, o, d, sampling);
    REQUIRE(res.accumulation >= 0.0);
    REQUIRE(res.accumulation <= 1.0);
    REQUIRE((res.color.array() >= 0.0).all());
    REQUIRE((res.color.array() <= 1.0).all());
  }
}

TEST_CASE("volume_render is deterministic") {
  const Aabb box{Vec3(-5, -5, 0), Vec3(5, 5, 10)};
  std::mt19937_64 g(10);
  SceneField r = random_field(g, {6, 6, 6}, box);
  SamplingSpec sampling{0.0, 12.0, 16};
  std::vector<double> jitter(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& j : jitter) j = u(g);
  const RenderResult a = volume_render(r, Vec3(0.5, -0.5, -1), Vec3(0, 0.1, 1).normalized(),
                                       sampling, jitter);
  const RenderResult b = volume_render(r, Vec3(0.5, -0.5, -1), Vec3(0, 0.1, 1).normalized(),
                                       sampling, jitter);
  CHECK(a.color == b.color);
  CHECK(a.accumulation == b.accumulation);
}

TEST_CASE("accumulation never drops when one density rises") {
  const Aabb box{Vec3(-5, -5, 0), Vec3(5, 5, 10)};
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SamplingSpec sampling{0.0, 12.0, 16};
  for (int trial = 0; trial < 50; ++trial) {
    SceneField f = random_field(g, {5, 5, 5}, box);
    const Vec3 o(8 * u(g) - 4, 8 * u(g) - 4, -1.0);
    const Vec3 d = Vec3(0.3 * (u(g) - 0.5), 0.3 * (u(g) - 0.5), 1.0).normalized();
    RenderTape tape;
    const RenderResult base = volume_render(f, o, d, sampling, {}, &tape);
    // Raise every density touched by the ray, one at a time.
    std::vector<double> grad(f.params().size(), 0.0);
    volume_render_backward(f, tape, Vec3::Zero(), 1.0, grad);
    for (std::size_t i = 0; i < grad.size(); i += SceneField::kChannels) {
      if (grad[i] == 0.0) continue;
      SceneField up = f;
      up.params()[i] += 0.5 + u(g);
      REQUIRE(volume_render(up, o, d, sampling).accumulation >= base.accumulation);
    }
  }
}

TEST_CASE("backward locality and zero upstream") {
  // One opaque sample at an exact vertex.
  const Aabb box{Vec3(0, 0, 0), Vec3(4, 4, 4)};
  SceneField f(box, {5, 5, 5}, 800.0, 0.3);
  SamplingSpec sampling{1.0, 3.0, 1};  // bin center at t = 2
  RenderTape tape;
  const RenderResult r = volume_render(f, Vec3(1, 1, 0), Vec3::UnitZ(), sampling, {}, &tape);
  CHECK(r.accumulation == 1.0);
  std::vector<double> grad(f.params().size(), 0.0);
  volume_render_backward(f, tape, Vec3(1, 0, 0), 0.0, grad);
  const std::size_t red = f.vertex_offset(1, 1, 2) + 1;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (i == red) {
      CHECK(grad[i] != 0.0);
    } else {
      REQUIRE(grad[i] == 0.0);
    }
  }

  std::mt19937_64 g(2);
  SceneField rf = random_field(g, {4, 4, 4}, box);
  const RenderResult rr = volume_render(rf, Vec3(1, 2, -1), Vec3::UnitZ(),
                                        SamplingSpec{0.0, 6.0, 8}, {}, &tape);
  (void)rr;
  std::vector<double> zero(rf.params().size(), 0.0);
  RayGradient rg;
  volume_render_backward(rf, tape, Vec3::Zero(), 0.0, zero, &rg);
  for (double v : zero) REQUIRE(v == 0.0);
  CHECK(rg.origin.norm() == 0.0);
  CHECK(rg.direction.norm() == 0.0);

  // Repeated calls add.
  std::vector<double> once(rf.params().size(), 0.0), twice(rf.params().size(), 0.0);
  volume_render_backward(rf, tape, Vec3(0.3, -0.2, 0.7), 0.4, once);
  volume_render_backward(rf, tape, Vec3(0.3, -0.2, 0.7), 0.4, twice);
  volume_render_backward(rf, tape, Vec3(0.3, -0.2, 0.7), 0.4, twice);
  for (std::size_t i = 0; i < once.size(); ++i) {
    REQUIRE(std::abs(twice[i] - 2.0 * once[i]) <= 1e-12 * std::abs(once[i]));
  }

  RenderTape blank;
  CHECK_THROWS_AS(volume_render_backward(rf, blank, Vec3::Ones(), 0.0, zero), Error);
  try {
    volume_render_backward(rf, blank, Vec3::Ones(), 0.0, zero);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kState);
  }
}

TEST_CASE("render gradients match central differences") {
  std::mt19937_64 g(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> res(2, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const Aabb box{Vec3(-4, -4, 0), Vec3(4, 4, 8)};
    SceneField f = random_field(g, {res(g), res(g), res(g)}, box);
    const int samples = 4 + static_cast<int>(u(g) * 12);
    // Bounds keep every sample strictly inside the box.
    const SamplingSpec sampling{1.0, 7.0, samples};
    const int rays = 1 + static_cast<int>(u(g) * 4);
    std::vector<Vec3> origins, dirs, gc;
    std::vector<double> ga;
    std::vector<std::vector<double>> jit;
    for (int r = 0; r < rays; ++r) {
      origins.emplace_back(2 * u(g) - 1, 2 * u(g) - 1, 0.0);
      dirs.push_back(Vec3(0.2 * (u(g) - 0.5), 0.2 * (u(g) - 0.5), 1.0).normalized());
      gc.emplace_back(u(g) - 0.5, u(g) - 0.5, u(g) - 0.5);
      ga.push_back(u(g) - 0.5);
      std::vector<double> j(samples);
      for (double& x : j) x = u(g);
      jit.push_back(j);
    }
    auto loss = [&](const SceneField& field) {
      double l = 0.0;
      for (int r = 0; r < rays; ++r) {
        const RenderResult rr = volume_render(field, origins[r], dirs[r], sampling, jit[r]);
        l += gc[r].dot(rr.color) + ga[r] * rr.accumulation;
      }
      return l;
    };
    std::vector<double> grad(f.params().size(), 0.0);
    std::vector<RayGradient> ray_grads(rays);
    RenderTape tape;
    for (int r = 0; r < rays; ++r) {
      volume_render(f, origins[r], dirs[r], sampling, jit[r], &tape);
      volume_render_backward(f, tape, gc[r], ga[r], grad, &ray_grads[r]);
    }
    const double h = 1e-4;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      SceneField p = f, m = f;
      p.params()[i] += h;
      m.params()[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2.0 * h);
      INFO("trial ", trial, " param ", i);
      REQUIRE(grad_close(grad[i], fd));
    }
    // Ray gradients with a small step; the samples stay inside the box.
    const double hr = 1e-6;
    for (int r = 0; r < rays; ++r) {
      for (int a = 0; a < 3; ++a) {
        auto ray_loss = [&](const Vec3& o, const Vec3& d) {
          const RenderResult rr = volume_render(f, o, d, sampling, jit[r]);
          return gc[r].dot(rr.color) + ga[r] * rr.accumulation;
        };
        Vec3 e = Vec3::Zero();
        e[a] = hr;
        const double fo = (ray_loss(origins[r] + e, dirs[r]) -
                           ray_loss(origins[r] - e, dirs[r])) / (2.0 * hr);
        const double fdir = (ray_loss(origins[r], dirs[r] + e) -
                             ray_loss(origins[r], dirs[r] - e)) / (2.0 * hr);
        INFO("trial ", trial, " ray ", r, " axis ", a);
        REQUIRE(grad_close(ray_grads[r].origin[a], fo, 1e-4, 1e-8));
        REQUIRE(grad_close(ray_grads[r].direction[a], fdir, 1e-4, 1e-8));
      }
    }
  }
}

TEST_CASE("texture gradients match central differences") {
  std::mt19937_64 g(29);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (int trial = 0; trial < 10; ++trial) {
    TextureField t(3 + trial % 6);
    for (double& v : t.params()) v = n(g);
    const Vec2 p(u(g), u(g));
    const Vec3 gc(n(g), n(g), n(g));
    std::vector<double> grad(t.params().size(), 0.0);
    t.backward(p, gc, grad);
    const double h = 1e-4;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      TextureField a = t, b = t;
      a.params()[i] += h;
      b.params()[i] -= h;
      const double fd = (gc.dot(a.eval(p)) - gc.dot(b.eval(p))) / (2.0 * h);
      REQUIRE(grad_close(grad[i], fd));
    }
  }
}
