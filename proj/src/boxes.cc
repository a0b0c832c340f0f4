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

#include "duck/boxes.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace duck {

namespace {

constexpr double kPi = std::numbers::pi;

double kappa(double width) {
  return 0.5 * width * (width - 1.0 / (width + 1.0) + 1.0);
}

double kappa_derivative(double width) {
  double w1 = width + 1.0;
  return width + 0.5 - 0.5 / (w1 * w1);
}

void check_corners(std::span<const double> lower, std::span<const double> upper,
                   std::span<const double> point) {
  check_same_dim(lower.size(), upper.size(), "box corners");
  check_same_dim(point.size(), lower.size(), "box vs point");
}

}  // namespace

BoxMode parse_box_mode(std::string_view tag) {
  if (tag == "polar") return BoxMode::kPolar;
  if (tag == "cartesian") return BoxMode::kCartesian;
  throw ConfigError("unknown box mode '" + std::string(tag) +
                    "' (expected polar or cartesian)");
}

std::string_view box_mode_name(BoxMode mode) {
  return mode == BoxMode::kPolar ? "polar" : "cartesian";
}

double dimension_term(double offset, double width, bool inside) {
  double a = std::abs(offset);
  if (inside) return a / (width + 1.0);
  return a * (width + 1.0) - kappa(width);
}

bool corners_contain(std::span<const double> lower,
                     std::span<const double> upper,
                     std::span<const double> point) {
  check_corners(lower, upper, point);
  for (size_t i = 0; i < point.size(); ++i) {
    if (point[i] < lower[i] || point[i] > upper[i]) return false;
  }
  return true;
}

double corner_distance(std::span<const double> lower,
                       std::span<const double> upper,
                       std::span<const double> point,
                       std::span<const Branch> force) {
  check_corners(lower, upper, point);
  if (!force.empty()) check_same_dim(force.size(), point.size(), "branches");
  double sum = 0.0;
  for (size_t i = 0; i < point.size(); ++i) {
    double width = upper[i] - lower[i];
    double offset = point[i] - 0.5 * (lower[i] + upper[i]);
    bool inside = point[i] >= lower[i] && point[i] <= upper[i];
    if (!force.empty() && force[i] != Branch::kAuto) {
      inside = force[i] == Branch::kInside;
    }
    double z = dimension_term(offset, width, inside);
    sum += z * z;
  }
  return std::sqrt(sum);
}

void corner_distance_vjp(std::span<const double> lower,
                         std::span<const double> upper,
                         std::span<const double> point, double upstream,
                         std::span<double> grad_lower,
                         std::span<double> grad_upper,
                         std::span<double> grad_point) {
  check_corners(lower, upper, point);
  size_t n = point.size();
  if (upstream == 0.0) return;
  Vec z(n), dz_dx(n), dz_dw(n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double width = upper[i] - lower[i];
    double w1 = width + 1.0;
    double x = point[i] - 0.5 * (lower[i] + upper[i]);
    if (point[i] > lower[i] && point[i] < upper[i]) {
      z[i] = x / w1;
      dz_dx[i] = 1.0 / w1;
      dz_dw[i] = -x / (w1 * w1);
    } else {
      double s = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
      z[i] = std::abs(x) * w1 - kappa(width);
      dz_dx[i] = s * w1;
      dz_dw[i] = std::abs(x) - kappa_derivative(width);
    }
    sum += z[i] * z[i];
  }
  double dist = std::sqrt(sum);
  if (dist == 0.0) return;
  for (size_t i = 0; i < n; ++i) {
    double gz = upstream * z[i] / dist;
    double gx = gz * dz_dx[i];
    double gw = gz * dz_dw[i];
    grad_point[i] += gx;
    grad_lower[i] += -0.5 * gx - gw;
    grad_upper[i] += -0.5 * gx + gw;
  }
}

double face_margin(std::span<const double> lower, std::span<const double> upper,
                   std::span<const double> point) {
  check_corners(lower, upper, point);
  double m = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < point.size(); ++i) {
    m = std::min(m, std::abs(point[i] - lower[i]));
    m = std::min(m, std::abs(point[i] - upper[i]));
  }
  return m;
}

bool contains(const PolarBox &box, const PolarAngles &phi) {
  return corners_contain(box.lower, box.upper, phi.angles);
}

double box_distance(const PolarBox &box, const PolarAngles &phi) {
  return corner_distance(box.lower, box.upper, phi.angles);
}

BoxDistanceGrad box_distance_vjp(const PolarBox &box, const PolarAngles &phi,
                                 double upstream) {
  size_t n = box.dim();
  BoxDistanceGrad g{Vec(n, 0.0), Vec(n, 0.0), Vec(phi.angles.size(), 0.0)};
  corner_distance_vjp(box.lower, box.upper, phi.angles, upstream, g.lower,
                      g.upper, g.point);
  return g;
}

bool cartesian_contains(const CartesianBox &box, std::span<const double> v) {
  return corners_contain(box.lower, box.upper, v);
}

double cartesian_box_distance(const CartesianBox &box,
                              std::span<const double> v) {
  return corner_distance(box.lower, box.upper, v);
}

double BoxSet::distance(RelationIndex r, std::span<const double> point) const {
  if (r >= size()) throw RangeError("relation index out of range");
  return corner_distance(lower[r], upper[r], point);
}

bool BoxSet::contains(RelationIndex r, std::span<const double> point) const {
  if (r >= size()) throw RangeError("relation index out of range");
  return corners_contain(lower[r], upper[r], point);
}

Vec box_point(BoxMode mode, std::span<const double> v) {
  if (mode == BoxMode::kPolar) return to_polar(v).angles;
  return Vec(v.begin(), v.end());
}

BoxParameterizer::BoxParameterizer(BoxMode mode, size_t dim, size_t input_dim,
                                   size_t hidden, double delta_min)
    : mode_(mode), delta_min_(delta_min) {
  if (dim < 2) throw ConfigError("embedding dimension must be >= 2");
  if (mode == BoxMode::kPolar && !(delta_min >= 0.0 && delta_min < kPi)) {
    throw ConfigError("polar delta_min must lie in [0, pi)");
  }
  if (mode == BoxMode::kCartesian && !(delta_min >= 0.0)) {
    throw ConfigError("cartesian delta_min must be >= 0");
  }
  size_t out = mode == BoxMode::kPolar ? dim - 1 : dim;
  ffn_lower_ = FeedForward("box.lower", input_dim, hidden, out);
  ffn_upper_ = FeedForward("box.upper", input_dim, hidden, out);
}

void BoxParameterizer::init(Rng &rng) {
  ffn_lower_.init(rng);
  ffn_upper_.init(rng);
}

void BoxParameterizer::polar_corners_from_logits(
    std::span<const double> lower_logits, std::span<const double> upper_logits,
    double delta_min, Vec &lower, Vec &upper) {
  check_same_dim(lower_logits.size(), upper_logits.size(), "box logits");
  size_t n = lower_logits.size();
  lower.resize(n);
  upper.resize(n);
  double span = kPi - delta_min;
  for (size_t i = 0; i < n; ++i) {
    lower[i] = sigmoid(lower_logits[i]) * span;
    double room = kPi - lower[i] - delta_min;
    upper[i] = lower[i] + delta_min + sigmoid(upper_logits[i]) * room;
    // Guard the last ulp so upper never exceeds pi.
    upper[i] = std::min(upper[i], kPi);
  }
}

void BoxParameterizer::cartesian_corners_from_outputs(
    std::span<const double> lower_out, std::span<const double> upper_out,
    double delta_min, Vec &lower, Vec &upper) {
  check_same_dim(lower_out.size(), upper_out.size(), "box outputs");
  size_t n = lower_out.size();
  lower.assign(lower_out.begin(), lower_out.end());
  upper.resize(n);
  for (size_t i = 0; i < n; ++i) {
    upper[i] = lower[i] + std::max(0.0, upper_out[i]) + delta_min;
  }
}

void BoxParameterizer::corners(std::span<const double> vr, Vec &lower,
                               Vec &upper, Cache *cache) const {
  FeedForward::Cache lc, uc;
  Vec a = ffn_lower_.forward(vr, &lc);
  Vec b = ffn_upper_.forward(vr, &uc);
  if (mode_ == BoxMode::kPolar) {
    polar_corners_from_logits(a, b, delta_min_, lower, upper);
  } else {
    cartesian_corners_from_outputs(a, b, delta_min_, lower, upper);
  }
  if (cache) {
    cache->lower_ffn = std::move(lc);
    cache->upper_ffn = std::move(uc);
    cache->lower_pre = std::move(a);
    cache->upper_pre = std::move(b);
  }
}

void BoxParameterizer::backward(std::span<const double> vr, const Cache &cache,
                                std::span<const double> grad_lower,
                                std::span<const double> grad_upper) {
  size_t n = box_dim();
  check_same_dim(grad_lower.size(), n, "box lower cotangent");
  check_same_dim(grad_upper.size(), n, "box upper cotangent");
  Vec ga(n), gb(n);
  if (mode_ == BoxMode::kPolar) {
    double span = kPi - delta_min_;
    for (size_t i = 0; i < n; ++i) {
      double sa = sigmoid(cache.lower_pre[i]);
      double sb = sigmoid(cache.upper_pre[i]);
      double lower = sa * span;
      // upper = lower (1 - sb) + delta_min (1 - sb) + sb pi
      double g_lower = grad_lower[i] + grad_upper[i] * (1.0 - sb);
      ga[i] = g_lower * span * sa * (1.0 - sa);
      gb[i] = grad_upper[i] * (kPi - lower - delta_min_) * sb * (1.0 - sb);
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      ga[i] = grad_lower[i] + grad_upper[i];
      gb[i] = cache.upper_pre[i] > 0.0 ? grad_upper[i] : 0.0;
    }
  }
  ffn_lower_.backward(vr, cache.lower_ffn, ga);
  ffn_upper_.backward(vr, cache.upper_ffn, gb);
}

PolarBox BoxParameterizer::parameterize_polar(std::span<const double> vr) const {
  if (mode_ != BoxMode::kPolar) {
    throw ConfigError("parameterize_polar called on a cartesian parameterizer");
  }
  PolarBox box;
  corners(vr, box.lower, box.upper);
  return box;
}

CartesianBox BoxParameterizer::parameterize_cartesian(
    std::span<const double> vr) const {
  if (mode_ != BoxMode::kCartesian) {
    throw ConfigError("parameterize_cartesian called on a polar parameterizer");
  }
  CartesianBox box;
  corners(vr, box.lower, box.upper);
  return box;
}

}  // namespace duck
