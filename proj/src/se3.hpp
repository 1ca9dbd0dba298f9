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

// SE(3) exponential map for twists (w, v): rotation by Rodrigues' formula,
// translation V(w) v. The map is templated on the scalar so that a small
// forward-mode dual number yields its exact 12x6 Jacobian.

#include <array>
#include <cmath>

#include "geometry.hpp"

namespace cf {

using Twist = Eigen::Matrix<double, 6, 1>;  // (w_x, w_y, w_z, v_x, v_y, v_z)

template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants

  friend Dual operator+(const Dual& a, const Dual& b) {
    Dual r(a.v + b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    Dual r(a.v - b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
    return r;
  }
};

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] / (2.0 * r.v);
  return r;
}
template <int N>
Dual<N> sin(const Dual<N>& a) {
  Dual<N> r(std::sin(a.v));
  const double c = std::cos(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * c;
  return r;
}
template <int N>
Dual<N> cos(const Dual<N>& a) {
  Dual<N> r(std::cos(a.v));
  const double s = -std::sin(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
  return r;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

// Rotation matrix (row-major 3x3) and translation of exp(twist).
template <typename S>
void se3_exp(const std::array<S, 6>& xi, std::array<S, 9>& rot, std::array<S, 3>& trans) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S& wx = xi[0];
  const S& wy = xi[1];
  const S& wz = xi[2];
  const S theta2 = wx * wx + wy * wy + wz * wz;
  S a, b, c;  // sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3
  if (value_of(theta2) < 1e-6) {
    // Taylor series; exact derivatives at the identity.
    const S t4 = theta2 * theta2;
    a = S(1.0) - theta2 / S(6.0) + t4 / S(120.0);
    b = S(0.5) - theta2 / S(24.0) + t4 / S(720.0);
    c = S(1.0 / 6.0) - theta2 / S(120.0) + t4 / S(5040.0);
  } else {
    const S theta = sqrt(theta2);
    const S s = sin(theta);
    const S co = cos(theta);
    a = s / theta;
    b = (S(1.0) - co) / theta2;
    c = (theta - s) / (theta2 * theta);
  }
  // K = [w]_x, K^2 = w w^T - theta^2 I.
  const S k[9] = {S(0.0), -wz, wy, wz, S(0.0), -wx, -wy, wx, S(0.0)};
  const S w[3] = {wx, wy, wz};
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) {
      const S k2 = w[r] * w[col] - (r == col ? theta2 : S(0.0));
      const S id = S(r == col ? 1.0 : 0.0);
      rot[r * 3 + col] = id + a * k[r * 3 + col] + b * k2;
    }
  }
  for (int r = 0; r < 3; ++r) {
    S acc(0.0);
    for (int col = 0; col < 3; ++col) {
      const S k2 = w[r] * w[col] - (r == col ? theta2 : S(0.0));
      const S id = S(r == col ? 1.0 : 0.0);
      acc = acc + (id + b * k[r * 3 + col] + c * k2) * xi[3 + col];
    }
    trans[r] = acc;
  }
}

inline RigidTransform twist_exp(const Twist& xi) {
  std::array<double, 6> x;
  for (int i = 0; i < 6; ++i) x[i] = xi[i];
  std::array<double, 9> rot;
  std::array<double, 3> trans;
  se3_exp(x, rot, trans);
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[r * 3 + c];
    t.translation[r] = trans[r];
  }
  return t;
}

// Jacobian of exp: d rotation(r,c)/d xi_k and d translation(r)/d xi_k.
struct TwistJacobian {
  std::array<Mat3, 6> rotation;
  std::array<Vec3, 6> translation;
};

inline TwistJacobian twist_exp_jacobian(const Twist& xi) {
  std::array<Dual<6>, 6> x;
  for (int i = 0; i < 6; ++i) {
    x[i] = Dual<6>(xi[i]);
    x[i].d[i] = 1.0;
  }
  std::array<Dual<6>, 9> rot;
  std::array<Dual<6>, 3> trans;
  se3_exp(x, rot, trans);
  TwistJacobian j;
  for (int k = 0; k < 6; ++k) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) j.rotation[k](r, c) = rot[r * 3 + c].d[k];
      j.translation[k][r] = trans[r].d[k];
    }
  }
  return j;
}

}  // namespace cf
