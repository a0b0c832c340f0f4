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

#ifndef DUCK_BOXES_H_
#define DUCK_BOXES_H_

#include <span>
#include <string_view>

#include "duck/common.h"
#include "duck/geometry.h"
#include "duck/param.h"

namespace duck {

enum class BoxMode { kPolar, kCartesian };

BoxMode parse_box_mode(std::string_view tag);
std::string_view box_mode_name(BoxMode mode);

// Axis-aligned box given by its two corners. The tag separates boxes over
// polar angles from boxes over raw cartesian coordinates.
template <class Tag>
struct BasicBox {
  Vec lower;
  Vec upper;

  size_t dim() const { return lower.size(); }
  Vec center() const {
    Vec c(lower.size());
    for (size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
  }
  Vec width() const {
    Vec w(lower.size());
    for (size_t i = 0; i < w.size(); ++i) w[i] = upper[i] - lower[i];
    return w;
  }
};

struct PolarTag {};
struct CartesianTag {};
using PolarBox = BasicBox<PolarTag>;
using CartesianBox = BasicBox<CartesianTag>;

// Which piece of the entity-box distance a dimension is evaluated with.
enum class Branch : uint8_t { kAuto, kInside, kOutside };

// One dimension of the entity-box distance for a point at `offset` from the
// box center along a dimension of width `width`:
//   inside:  |offset| / (width + 1)
//   outside: |offset| * (width + 1) - kappa,
//            kappa = width/2 * (width - 1/(width + 1) + 1).
// The pieces meet at |offset| = width/2.
double dimension_term(double offset, double width, bool inside);

// Closed membership: lower[i] <= point[i] <= upper[i] for all i.
bool corners_contain(std::span<const double> lower,
                     std::span<const double> upper,
                     std::span<const double> point);

// Euclidean norm of the per-dimension terms. A dimension uses the inside
// piece when its coordinate lies within [lower, upper] and the outside piece
// otherwise, so a point inside the box is scored entirely by the inside
// piece. `force`, when non-empty, overrides the choice per dimension.
double corner_distance(std::span<const double> lower,
                       std::span<const double> upper,
                       std::span<const double> point,
                       std::span<const Branch> force = {});

// Accumulates upstream * d(distance) into the three gradient spans. On a
// face of the box the outside piece's derivative is used; at zero distance
// the gradient is zero.
void corner_distance_vjp(std::span<const double> lower,
                         std::span<const double> upper,
                         std::span<const double> point, double upstream,
                         std::span<double> grad_lower,
                         std::span<double> grad_upper,
                         std::span<double> grad_point);

// Smallest distance from any coordinate of `point` to a face of the box, in
// units of the coordinate. Used to keep gradient checks away from kinks.
double face_margin(std::span<const double> lower, std::span<const double> upper,
                   std::span<const double> point);

bool contains(const PolarBox &box, const PolarAngles &phi);
double box_distance(const PolarBox &box, const PolarAngles &phi);

struct BoxDistanceGrad {
  Vec lower;
  Vec upper;
  Vec point;
};
BoxDistanceGrad box_distance_vjp(const PolarBox &box, const PolarAngles &phi,
                                 double upstream);

bool cartesian_contains(const CartesianBox &box, std::span<const double> v);
double cartesian_box_distance(const CartesianBox &box,
                              std::span<const double> v);

// Corners of every relation's box in one mode, indexed by relation.
struct BoxSet {
  BoxMode mode = BoxMode::kPolar;
  std::vector<Vec> lower;
  std::vector<Vec> upper;

  size_t size() const { return lower.size(); }
  double distance(RelationIndex r, std::span<const double> point) const;
  bool contains(RelationIndex r, std::span<const double> point) const;
};

// The coordinates a box constrains: polar angles of v in polar mode, v
// itself in cartesian mode.
Vec box_point(BoxMode mode, std::span<const double> v);

// Maps a frozen relation embedding to a box with two feed-forward networks.
//
// Polar mode, over d-1 angles with minimum width delta_min < pi:
//   lower = sigmoid(ffn_lower(vr)) * (pi - delta_min)
//   upper = lower + delta_min + sigmoid(ffn_upper(vr)) * (pi - lower - delta_min)
// which keeps 0 <= lower, lower + delta_min <= upper <= pi in every
// dimension.
//
// Cartesian mode, over d coordinates:
//   lower = ffn_lower(vr)
//   upper = lower + relu(ffn_upper(vr)) + delta_min
class BoxParameterizer {
 public:
  struct Cache {
    FeedForward::Cache lower_ffn;
    FeedForward::Cache upper_ffn;
    Vec lower_pre;
    Vec upper_pre;
  };

  BoxParameterizer() = default;
  // `dim` is the embedding dimension d; `input_dim` the relation embedding
  // size; `hidden` the FFN hidden width.
  BoxParameterizer(BoxMode mode, size_t dim, size_t input_dim, size_t hidden,
                   double delta_min);

  BoxMode mode() const { return mode_; }
  double delta_min() const { return delta_min_; }
  // d-1 in polar mode, d in cartesian mode.
  size_t box_dim() const { return ffn_lower_.out_dim(); }

  void init(Rng &rng);

  // Corners in the active mode.
  void corners(std::span<const double> vr, Vec &lower, Vec &upper,
               Cache *cache = nullptr) const;
  // Accumulates FFN gradients from cotangents over the two corners.
  void backward(std::span<const double> vr, const Cache &cache,
                std::span<const double> grad_lower,
                std::span<const double> grad_upper);

  PolarBox parameterize_polar(std::span<const double> vr) const;
  CartesianBox parameterize_cartesian(std::span<const double> vr) const;

  // Box corners from raw FFN outputs; exposed so the formulas can be checked
  // at saturation without crafting weights.
  static void polar_corners_from_logits(std::span<const double> lower_logits,
                                        std::span<const double> upper_logits,
                                        double delta_min, Vec &lower,
                                        Vec &upper);
  static void cartesian_corners_from_outputs(
      std::span<const double> lower_out, std::span<const double> upper_out,
      double delta_min, Vec &lower, Vec &upper);

  FeedForward &ffn_lower() { return ffn_lower_; }
  FeedForward &ffn_upper() { return ffn_upper_; }
  const FeedForward &ffn_lower() const { return ffn_lower_; }
  const FeedForward &ffn_upper() const { return ffn_upper_; }

 private:
  BoxMode mode_ = BoxMode::kPolar;
  double delta_min_ = 0.1;
  FeedForward ffn_lower_;
  FeedForward ffn_upper_;
};

}  // namespace duck

#endif  // DUCK_BOXES_H_
