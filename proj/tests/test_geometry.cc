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


#include <cmath>
#include <numbers>

#include "doctest.h"
#include "duck/geometry.h"
#include "support.h"

using namespace duck;
using duck::testing::half_sphere_vec;
using duck::testing::normal_vec;
using duck::testing::uniform_vec;

constexpr double kPi = std::numbers::pi;

TEST_CASE("half_sphere_project") {
  CHECK(half_sphere_project(Vec{1, -2}) == Vec{1, 2});
  CHECK(half_sphere_project(Vec{0.3, 0.4, 0.0}) == Vec{0.3, 0.4, 0.0});
}

TEST_CASE("half_sphere_project_vjp: matches finite differences") {
  Vec v{0.5, -2.0};
  Vec cot{1.0, 1.0};
  half_sphere_project_vjp(v, cot);
  CHECK(cot[0] == 1.0);
  CHECK(cot[1] == -1.0);
  double h = 1e-5;
  Vec plus = v, minus = v;
  plus[1] += h;
  minus[1] -= h;
  double fd = (half_sphere_project(plus)[1] - half_sphere_project(minus)[1]) /
              (2 * h);
  CHECK(fd == doctest::Approx(-1.0).epsilon(1e-9));
  Vec zero_cot{1.0, 1.0};
  half_sphere_project_vjp(Vec{1.0, 0.0}, zero_cot);
  CHECK(zero_cot[1] == 0.0);
}

TEST_CASE("to_polar: axis examples") {
  auto p = to_polar(Vec{0, 1});
  REQUIRE(p.angles.size() == 1);
  CHECK(p.angles[0] == doctest::Approx(kPi / 2));
  CHECK(p.radius == doctest::Approx(1.0));

  auto q = to_polar(Vec{1, 0, 0});
  REQUIRE(q.angles.size() == 2);
  CHECK(q.angles[0] == doctest::Approx(0.0));
  CHECK(q.angles[1] == doctest::Approx(kPi / 2));
}

TEST_CASE("to_polar: errors") {
  CHECK_THROWS_AS(to_polar(Vec{1.0}), DimensionError);
  CHECK_THROWS_AS(to_polar(Vec{0.0, 0.0, 0.0}), NumericError);
}

TEST_CASE("to_polar: last angle reflects below the plane") {
  auto p = to_polar(Vec{1.0, -1.0});
  CHECK(p.angles[0] == doctest::Approx(2 * kPi - kPi / 4));
  auto back = from_polar(p);
  CHECK(back[0] == doctest::Approx(1.0));
  CHECK(back[1] == doctest::Approx(-1.0));
}

TEST_CASE("from_polar: examples") {
  auto v = from_polar(PolarAngles{{kPi / 2}, 2.0});
  CHECK(v[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(2.0));
  auto z = from_polar(PolarAngles{{0.3, 1.2, 2.0}, 0.0});
  for (double x : z) CHECK(x == 0.0);
}

TEST_CASE("round trip and angle range on random half-sphere vectors") {
  Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    size_t d = 2 + rng.below(15);
    Vec v = half_sphere_project(normal_vec(rng, d));
    if (v.back() == 0.0) continue;
    auto p = to_polar(v);
    for (double a : p.angles) {
      CHECK(a >= 0.0);
      CHECK(a <= kPi);
    }
    Vec back = from_polar(p);
    double err = 0.0;
    for (size_t j = 0; j < d; ++j) err = std::max(err, std::abs(back[j] - v[j]));
    CHECK(err <= 1e-9 * norm2(v));
    CHECK(std::abs(norm2(back) - norm2(v)) <= 1e-12 * norm2(v));
  }
}

TEST_CASE("from_polar inverted by to_polar on interior angles") {
  Rng rng(22);
  for (int i = 0; i < 1000; ++i) {
    size_t n = 1 + rng.below(10);
    PolarAngles p{uniform_vec(rng, n, 0.1, kPi - 0.1), 1.0};
    auto q = to_polar(from_polar(p));
    for (size_t j = 0; j < n; ++j) {
      CHECK(std::abs(q.angles[j] - p.angles[j]) <= 1e-9 * p.angles[j]);
    }
  }
}

TEST_CASE("to_polar is scale invariant in the angles") {
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    Vec v = half_sphere_vec(rng, 2 + rng.below(10));
    double c = std::exp(4.0 * rng.uniform() - 2.0);
    Vec w = v;
    for (double &x : w) x *= c;
    auto a = to_polar(v).angles;
    auto b = to_polar(w).angles;
    for (size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-9);
  }
}

TEST_CASE("polar_jacobian_vjp: hand example and zero upstream") {
  Vec g = polar_jacobian_vjp(Vec{0, 1}, Vec{1});
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-15));
  Vec z = polar_jacobian_vjp(Vec{0.2, 0.3, 0.4}, Vec{0, 0});
  for (double x : z) CHECK(x == 0.0);
}

TEST_CASE("polar_jacobian_vjp: finite differences at random points") {
  Rng rng(24);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    size_t d = 2 + rng.below(9);
    Vec v = half_sphere_vec(rng, d);
    Vec up = normal_vec(rng, d - 1);
    Vec g = polar_jacobian_vjp(v, up);
    for (size_t j = 0; j < d; ++j) {
      Vec plus = v, minus = v;
      plus[j] += h;
      minus[j] -= h;
      double fp = dot(up, to_polar(plus).angles);
      double fm = dot(up, to_polar(minus).angles);
      double numeric = (fp - fm) / (2 * h);
      double err = std::abs(numeric - g[j]) /
                   std::max({std::abs(numeric), std::abs(g[j]), 1e-6});
      worst = std::max(worst, err);
    }
  }
  CHECK(worst <= 1e-4);
}
