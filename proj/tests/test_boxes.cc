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


#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "duck/boxes.h"
#include "support.h"

using namespace duck;
using duck::testing::normal_vec;
using duck::testing::uniform_vec;

constexpr double kPi = std::numbers::pi;

namespace {

PolarBox box1d(double center, double width) {
  return PolarBox{{center - width / 2}, {center + width / 2}};
}

// Re-evaluates W2 tanh(W1 x + b1) + b2 from the raw weights.
Vec ffn_reference(const FeedForward &f, std::span<const double> x) {
  Vec hidden(f.hidden_dim());
  for (size_t i = 0; i < hidden.size(); ++i) {
    double s = f.b1.value[i];
    for (size_t j = 0; j < x.size(); ++j) s += f.w1.value[i * f.w1.cols + j] * x[j];
    hidden[i] = std::tanh(s);
  }
  Vec out(f.out_dim());
  for (size_t i = 0; i < out.size(); ++i) {
    double s = f.b2.value[i];
    for (size_t j = 0; j < hidden.size(); ++j) {
      s += f.w2.value[i * f.w2.cols + j] * hidden[j];
    }
    out[i] = s;
  }
  return out;
}

}  // namespace

TEST_CASE("mode tags") {
  CHECK(parse_box_mode("polar") == BoxMode::kPolar);
  CHECK(parse_box_mode("cartesian") == BoxMode::kCartesian);
  CHECK(box_mode_name(BoxMode::kCartesian) == "cartesian");
  CHECK_THROWS_AS(parse_box_mode("hyperbolic"), ConfigError);
}

TEST_CASE("contains: closed box") {
  PolarBox b{{0.5, 1.0}, {1.5, 2.0}};
  CHECK(contains(b, PolarAngles{b.center(), 1.0}));
  CHECK(contains(b, PolarAngles{b.upper, 1.0}));
  CHECK(contains(b, PolarAngles{b.lower, 1.0}));
  CHECK_FALSE(contains(b, PolarAngles{{1.0, 2.0001}, 1.0}));
  CHECK_THROWS_AS(contains(b, PolarAngles{{1.0}, 1.0}), DimensionError);
}

TEST_CASE("box_distance: hand examples") {
  auto b = box1d(1.0, 1.0);
  CHECK(box_distance(b, PolarAngles{{1.0}, 1.0}) == 0.0);
  CHECK(box_distance(b, PolarAngles{{1.25}, 1.0}) == doctest::Approx(0.125));
  CHECK(box_distance(b, PolarAngles{{2.0}, 1.0}) == doctest::Approx(1.25));
  CHECK(dimension_term(0.25, 1.0, true) == doctest::Approx(0.125));
  CHECK(dimension_term(1.0, 1.0, false) == doctest::Approx(1.25));
  CHECK_THROWS_AS(box_distance(b, PolarAngles{{1.0, 1.0}, 1.0}), DimensionError);
}

TEST_CASE("box_distance: multi-dimensional norm of per-dimension terms") {
  PolarBox b{{0.0, 1.0, 2.0}, {1.0, 1.5, 2.2}};
  Vec phi{0.7, 1.9, 2.1};
  Vec c = b.center(), w = b.width();
  double sum = 0.0;
  for (size_t i = 0; i < 3; ++i) {
    double x = std::abs(phi[i] - c[i]);
    double term = x <= w[i] / 2
                      ? x / (w[i] + 1)
                      : x * (w[i] + 1) -
                            w[i] / 2 * (w[i] - 1 / (w[i] + 1) + 1);
    sum += term * term;
  }
  CHECK(box_distance(b, PolarAngles{phi, 1.0}) ==
        doctest::Approx(std::sqrt(sum)).epsilon(1e-14));
}

TEST_CASE("boundary continuity of the two pieces") {
  Rng rng(31);
  for (int i = 0; i < 10000; ++i) {
    double w = 3.0 * rng.uniform();
    double in = dimension_term(w / 2, w, true);
    double out = dimension_term(w / 2, w, false);
    CHECK(std::abs(in - out) <= 1e-9);
  }
}

TEST_CASE("monotone escape along rays from the center") {
  Rng rng(32);
  for (int i = 0; i < 200; ++i) {
    size_t n = 1 + rng.below(6);
    PolarBox b;
    b.lower = uniform_vec(rng, n, 0.0, 1.5);
    b.upper = b.lower;
    for (double &u : b.upper) u += 0.1 + rng.uniform();
    Vec dir = normal_vec(rng, n);
    Vec c = b.center();
    double prev = -1.0;
    bool was_outside = false;
    for (int s = 0; s <= 60; ++s) {
      double t = 0.05 * s;
      Vec p(n);
      for (size_t j = 0; j < n; ++j) p[j] = c[j] + t * dir[j];
      double dist = box_distance(b, PolarAngles{p, 1.0});
      if (was_outside) {
        CHECK(dist > prev);
      } else {
        CHECK(dist >= prev);
      }
      was_outside = !contains(b, PolarAngles{p, 1.0});
      prev = dist;
    }
  }
}

TEST_CASE("inside values are bounded") {
  Rng rng(33);
  for (int i = 0; i < 1000; ++i) {
    size_t n = 1 + rng.below(6);
    PolarBox b;
    b.lower = uniform_vec(rng, n, 0.0, 1.5);
    b.upper = b.lower;
    for (double &u : b.upper) u += 0.1 + rng.uniform();
    Vec p(n);
    for (size_t j = 0; j < n; ++j) {
      p[j] = b.lower[j] + (b.upper[j] - b.lower[j]) * rng.uniform();
    }
    Vec w = b.width();
    double bound = 0.0;
    for (double x : w) bound += (x / 2 / (x + 1)) * (x / 2 / (x + 1));
    double dist = box_distance(b, PolarAngles{p, 1.0});
    CHECK(dist <= std::sqrt(bound) + 1e-15);
    CHECK(dist <= norm2(w) / 2 + 1e-15);
  }
}

TEST_CASE("width dependence of the per-dimension terms") {
  Rng rng(34);
  for (int i = 0; i < 1000; ++i) {
    double w1 = 0.1 + 2.0 * rng.uniform();
    double w2 = w1 + 0.01 + rng.uniform();
    double inside = (w1 / 2) * (0.01 + 0.99 * rng.uniform());
    CHECK(dimension_term(inside, w2, true) < dimension_term(inside, w1, true));
    double outside = w2 / 2 + 0.01 + rng.uniform();
    CHECK(outside * (w2 + 1) > outside * (w1 + 1));
  }
}

TEST_CASE("box_distance_vjp: zero upstream and 1-D inside slope") {
  auto b = box1d(1.0, 1.0);
  auto g = box_distance_vjp(b, PolarAngles{{1.3}, 1.0}, 0.0);
  CHECK(g.point[0] == 0.0);
  CHECK(g.lower[0] == 0.0);
  CHECK(g.upper[0] == 0.0);
  auto gi = box_distance_vjp(b, PolarAngles{{1.3}, 1.0}, 1.0);
  CHECK(gi.point[0] == doctest::Approx(1.0 / 2.0));
  auto gn = box_distance_vjp(b, PolarAngles{{0.8}, 1.0}, 1.0);
  CHECK(gn.point[0] == doctest::Approx(-1.0 / 2.0));
}

TEST_CASE("box_distance_vjp: finite differences on both pieces") {
  Rng rng(35);
  const double h = 1e-5;
  double worst = 0.0;
  size_t compared = 0;
  for (int i = 0; i < 400; ++i) {
    size_t n = 1 + rng.below(6);
    PolarBox b;
    b.lower = uniform_vec(rng, n, 0.0, 1.5);
    b.upper = b.lower;
    for (double &u : b.upper) u += 0.2 + rng.uniform();
    Vec p = uniform_vec(rng, n, -0.5, 3.5);
    if (face_margin(b.lower, b.upper, p) < 1e-3) continue;
    Vec c = b.center();
    bool near_center = false;
    for (size_t j = 0; j < n; ++j) near_center |= std::abs(p[j] - c[j]) < 1e-3;
    if (near_center) continue;
    double up = rng.normal();
    auto g = box_distance_vjp(b, PolarAngles{p, 1.0}, up);
    auto f = [&](const PolarBox &bb, const Vec &pp) {
      return up * box_distance(bb, PolarAngles{pp, 1.0});
    };
    auto compare = [&](double analytic, double numeric) {
      double err = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
      ++compared;
    };
    for (size_t j = 0; j < n; ++j) {
      Vec pp = p, pm = p;
      pp[j] += h;
      pm[j] -= h;
      compare(g.point[j], (f(b, pp) - f(b, pm)) / (2 * h));
      PolarBox lp = b, lm = b;
      lp.lower[j] += h;
      lm.lower[j] -= h;
      compare(g.lower[j], (f(lp, p) - f(lm, p)) / (2 * h));
      PolarBox up_ = b, um = b;
      up_.upper[j] += h;
      um.upper[j] -= h;
      compare(g.upper[j], (f(up_, p) - f(um, p)) / (2 * h));
    }
  }
  CHECK(compared > 1000);
  CHECK(worst <= 1e-4);
}

TEST_CASE("cartesian distance shares the formula") {
  CartesianBox cb{{0.5}, {1.5}};
  CHECK(cartesian_box_distance(cb, Vec{1.0}) == 0.0);
  CHECK(cartesian_box_distance(cb, Vec{1.25}) == doctest::Approx(0.125));
  CHECK(cartesian_box_distance(cb, Vec{2.0}) == doctest::Approx(1.25));
  CHECK(cartesian_contains(cb, Vec{1.5}));
  CHECK_THROWS_AS(cartesian_box_distance(cb, Vec{1.0, 2.0}), DimensionError);

  Rng rng(36);
  for (int i = 0; i < 500; ++i) {
    size_t n = 1 + rng.below(8);
    Vec lo = uniform_vec(rng, n, 0.0, 1.5);
    Vec hi = lo;
    for (double &u : hi) u += 0.1 + rng.uniform();
    Vec p = uniform_vec(rng, n, 0.0, kPi);
    CHECK(cartesian_box_distance(CartesianBox{lo, hi}, p) ==
          box_distance(PolarBox{lo, hi}, PolarAngles{p, 1.0}));
  }
}

TEST_CASE("polar corners at saturation") {
  const double dmin = 0.1;
  Vec lo, hi;
  BoxParameterizer::polar_corners_from_logits(Vec{-40, -40}, Vec{-40, -40},
                                              dmin, lo, hi);
  CHECK(lo[0] == doctest::Approx(0.0));
  CHECK(hi[0] == doctest::Approx(dmin));

  // sigmoid(logit) = 1 - 1e-9
  double logit = std::log((1 - 1e-9) / 1e-9);
  BoxParameterizer::polar_corners_from_logits(Vec{logit}, Vec{logit}, dmin, lo,
                                              hi);
  CHECK(lo[0] == doctest::Approx(kPi - dmin).epsilon(1e-8));
  CHECK(hi[0] == doctest::Approx(kPi).epsilon(1e-8));
  CHECK(hi[0] <= kPi);
  CHECK(hi[0] - lo[0] >= dmin - 1e-12);
}

TEST_CASE("polar parameterizer invariants on random draws") {
  Rng rng(37);
  for (int i = 0; i < 1000; ++i) {
    size_t d = 2 + rng.below(10);
    double dmin = 0.01 + 0.5 * rng.uniform();
    BoxParameterizer p(BoxMode::kPolar, d, d, 1 + rng.below(8), dmin);
    p.init(rng);
    Vec vr = normal_vec(rng, d);
    for (double &x : vr) x *= 1.0 + 10.0 * rng.uniform();
    auto box = p.parameterize_polar(vr);
    REQUIRE(box.dim() == d - 1);
    for (size_t j = 0; j < box.dim(); ++j) {
      CHECK(box.lower[j] >= 0.0);
      CHECK(box.upper[j] <= kPi);
      CHECK(box.lower[j] < box.upper[j]);
      CHECK(box.upper[j] - box.lower[j] >= dmin - 1e-12);
    }
  }
}

TEST_CASE("cartesian parameterizer") {
  Vec lo, hi;
  BoxParameterizer::cartesian_corners_from_outputs(Vec{0.3, -1.0, 2.0},
                                                   Vec{-1.0, -0.5, -3.0}, 0.1,
                                                   lo, hi);
  for (size_t j = 0; j < 3; ++j) {
    CHECK(hi[j] - lo[j] == doctest::Approx(0.1).epsilon(1e-15));
  }
  CHECK(lo == Vec{0.3, -1.0, 2.0});

  Rng rng(38);
  for (int i = 0; i < 500; ++i) {
    size_t d = 2 + rng.below(8);
    BoxParameterizer p(BoxMode::kCartesian, d, d, 1 + rng.below(8), 0.1);
    p.init(rng);
    Vec vr = normal_vec(rng, d);
    auto box = p.parameterize_cartesian(vr);
    Vec lower_ref = ffn_reference(p.ffn_lower(), vr);
    Vec upper_ref = ffn_reference(p.ffn_upper(), vr);
    REQUIRE(box.dim() == d);
    for (size_t j = 0; j < d; ++j) {
      CHECK(std::abs(box.lower[j] - lower_ref[j]) <= 1e-12);
      CHECK(std::abs(box.width()[j] - (std::max(0.0, upper_ref[j]) + 0.1)) <=
            1e-12);
    }
  }
}

TEST_CASE("polar parameterizer matches an independent evaluation") {
  Rng rng(39);
  for (int i = 0; i < 200; ++i) {
    size_t d = 2 + rng.below(8);
    BoxParameterizer p(BoxMode::kPolar, d, d, 4, 0.1);
    p.init(rng);
    Vec vr = normal_vec(rng, d);
    auto box = p.parameterize_polar(vr);
    Vec a = ffn_reference(p.ffn_lower(), vr);
    Vec b = ffn_reference(p.ffn_upper(), vr);
    for (size_t j = 0; j < d - 1; ++j) {
      double lo = 1 / (1 + std::exp(-a[j])) * (kPi - 0.1);
      double hi = lo + 0.1 + 1 / (1 + std::exp(-b[j])) * (kPi - lo - 0.1);
      CHECK(std::abs(box.lower[j] - lo) <= 1e-12);
      CHECK(std::abs(box.upper[j] - hi) <= 1e-12);
    }
  }
}

TEST_CASE("BoxSet dispatches on mode") {
  BoxSet polar{BoxMode::kPolar, {{0.5, 0.5}}, {{1.5, 1.5}}};
  Vec v{0.0, 0.0, 1.0};
  Vec pt = box_point(BoxMode::kPolar, v);
  REQUIRE(pt.size() == 2);
  CHECK(polar.distance(0, pt) ==
        box_distance(PolarBox{polar.lower[0], polar.upper[0]},
                     PolarAngles{pt, 1.0}));
  Vec cp = box_point(BoxMode::kCartesian, v);
  CHECK(cp == v);
}
