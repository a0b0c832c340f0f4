// Copyright 2026 The Duck Toolkit Authors
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

#include "duck/geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace duck {

namespace {

constexpr double kPi = std::numbers::pi;

void check_polar_input(std::span<const double> v) {
  if (v.size() < 2) {
    throw DimensionError("polar conversion needs d >= 2, got " +
                         std::to_string(v.size()));
  }
}

// tail[i] = ||(v_i, ..., v_{d-1})|| (0-based), tail[d] = 0.
Vec tail_norms(std::span<const double> v) {
  size_t d = v.size();
  Vec sq(d + 1, 0.0);
  for (size_t i = d; i-- > 0;) sq[i] = sq[i + 1] + v[i] * v[i];
  for (double &x : sq) x = std::sqrt(x);
  return sq;
}

}  // namespace

Vec half_sphere_project(std::span<const double> v) {
  Vec out(v.begin(), v.end());
  if (!out.empty()) out.back() = std::abs(out.back());
  return out;
}

void half_sphere_project_vjp(std::span<const double> v,
                             std::span<double> cotangent) {
  check_same_dim(v.size(), cotangent.size(), "half_sphere_project_vjp");
  if (v.empty()) return;
  double last = v.back();
  double sign = last > 0 ? 1.0 : (last < 0 ? -1.0 : 0.0);
  cotangent.back() *= sign;
}

PolarAngles to_polar(std::span<const double> v) {
  check_polar_input(v);
  size_t d = v.size();
  Vec tail = tail_norms(v);
  if (tail[0] < kNormEpsilon) {
    throw NumericError("to_polar: zero-norm input");
  }
  PolarAngles out;
  out.radius = tail[0];
  out.angles.resize(d - 1);
  for (size_t i = 0; i + 2 < d; ++i) {
    if (tail[i] < kNormEpsilon) {
      // Nothing left to measure: the clamped arccos of v_i / eps.
      out.angles[i] = std::acos(std::clamp(v[i] / kNormEpsilon, -1.0, 1.0));
    } else {
      out.angles[i] = std::atan2(tail[i + 1], v[i]);
    }
  }
  double x = v[d - 2];
  double y = v[d - 1];
  if (tail[d - 2] < kNormEpsilon) {
    out.angles[d - 2] = std::acos(std::clamp(x / kNormEpsilon, -1.0, 1.0));
  } else {
    double phi = std::atan2(y, x);
    out.angles[d - 2] = phi < 0 ? phi + 2.0 * kPi : phi;
  }
  return out;
}

Vec from_polar(const PolarAngles &p) {
  size_t d = p.angles.size() + 1;
  Vec v(d);
  double prefix = p.radius;
  for (size_t i = 0; i + 1 < d; ++i) {
    v[i] = prefix * std::cos(p.angles[i]);
    prefix *= std::sin(p.angles[i]);
  }
  v[d - 1] = prefix;
  return v;
}

Vec polar_jacobian_vjp(std::span<const double> v,
                       std::span<const double> upstream) {
  check_polar_input(v);
  size_t d = v.size();
  check_same_dim(upstream.size(), d - 1, "polar_jacobian_vjp");
  Vec tail = tail_norms(v);
  Vec grad(d, 0.0);
  // For i < d-1: angle_i = atan2(t_{i+1}, v_i) with t_j the tail norms, so
  //   d/dv_i = -t_{i+1} / t_i^2
  //   d/dv_j = (v_i / t_i^2) * (v_j / t_{i+1})   for j > i.
  // The factor v_j / t_{i+1} is a unit-vector component, hence bounded.
  // The j > i terms share coefficient c_i, so grad_j += v_j * sum_{i<j} c_i.
  double running = 0.0;
  for (size_t i = 0; i + 1 < d; ++i) {
    grad[i] += running * v[i];
    if (i + 2 >= d) {
      grad[i + 1] += running * v[i + 1];
      break;
    }
    double g = upstream[i];
    double ti = tail[i];
    if (ti < kNormEpsilon || g == 0.0) continue;
    double ti2 = ti * ti;
    grad[i] -= g * tail[i + 1] / ti2;
    running += g * v[i] / (ti2 * std::max(tail[i + 1], kNormEpsilon));
  }
  // Last angle: atan2(v_{d-1}, v_{d-2}) in 0-based indexing.
  double g = upstream[d - 2];
  double r2 = tail[d - 2] * tail[d - 2];
  if (g != 0.0 && tail[d - 2] >= kNormEpsilon) {
    grad[d - 2] -= g * v[d - 1] / r2;
    grad[d - 1] += g * v[d - 2] / r2;
  }
  return grad;
}

}  // namespace duck
