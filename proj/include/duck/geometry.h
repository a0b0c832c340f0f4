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

#ifndef DUCK_GEOMETRY_H_
#define DUCK_GEOMETRY_H_

#include <span>

#include "duck/common.h"

namespace duck {

// Floor applied to tail norms ||(v_i, ..., v_d)|| in the polar conversion.
constexpr double kNormEpsilon = 1e-12;

// d-1 angles plus the radius they were measured at. The radius is carried
// along so a round trip reproduces the input norm exactly.
struct PolarAngles {
  Vec angles;
  double radius = 0.0;
};

// Replaces the last component by its absolute value, restricting the vector
// to the half hypersphere where every polar angle lies in [0, pi].
Vec half_sphere_project(std::span<const double> v);

// Chain rule through half_sphere_project: scales the last entry of the
// cotangent by sign(v_d), with 0 at v_d == 0.
void half_sphere_project_vjp(std::span<const double> v,
                             std::span<double> cotangent);

// Cartesian to spherical polar coordinates. For i < d-1 the i-th angle is
// arccos(v_i / ||v_i..v_d||); the last one is measured in the (v_{d-1}, v_d)
// plane and lands in (pi, 2pi) when v_d < 0. Angles are evaluated in the
// equivalent atan2 form, which stays accurate when the arccos argument
// approaches +-1. Throws DimensionError for d < 2 and NumericError for a
// zero vector.
PolarAngles to_polar(std::span<const double> v);

// Spherical to cartesian; the exact inverse of to_polar on angles in
// (0, pi)^(d-2) x (0, 2pi).
Vec from_polar(const PolarAngles &p);

// upstream^T * d(angles)/dv.
Vec polar_jacobian_vjp(std::span<const double> v,
                       std::span<const double> upstream);

}  // namespace duck

#endif  // DUCK_GEOMETRY_H_
