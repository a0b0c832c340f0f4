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

#ifndef DUCK_OBJECTIVE_H_
#define DUCK_OBJECTIVE_H_

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "duck/boxes.h"
#include "duck/common.h"
#include "duck/kg.h"
#include "duck/model.h"

namespace duck {

struct LossWeights {
  double gamma = 2.0;         // margin
  double alpha = 0.1;         // negative-sampling temperature, in [0, 1]
  double lambda_duck = 0.1;   // weight of the typing terms
  double lambda_l2 = 0.1;     // weight of the box-size regularizer
  size_t k_negatives = 512;   // sampled negative relations per point

  void validate() const;
};

// s(e, m) = v_e . v_m
double similarity(std::span<const double> ve, std::span<const double> vm);

// -s(m, e*) + log sum_j exp(s(m, e_j)), the sum running over e* and the
// negatives.
double loss_ed(std::span<const double> mention, std::span<const double> gold,
               const std::vector<Vec> &negatives);

struct EdLoss {
  double value = 0.0;
  Vec grad_mention;
  std::vector<Vec> grad_pool;
};

// Cross-entropy over a scored pool that contains the gold entity at
// `gold_position`. Throws EmptyInputError for an empty pool.
EdLoss loss_ed_with_grad(std::span<const double> mention,
                         const std::vector<std::span<const double>> &pool,
                         size_t gold_position);

// p(r | e) = softmax(-alpha * dist(e, r)) over the relations not in
// `positives`. Entries are (relation, probability) in relation order.
std::vector<std::pair<RelationIndex, double>> negative_distribution(
    const RelationSet &positives, std::span<const double> distances,
    double alpha);

// k i.i.d. draws from negative_distribution. Empty (with a warning) when the
// entity holds every relation.
std::vector<RelationIndex> sample_negative_relations(
    const RelationSet &positives, std::span<const double> distances,
    double alpha, size_t k, Rng &rng);

std::vector<RelationIndex> sample_negative_relations(
    const RelationSet &positives, const BoxSet &boxes,
    std::span<const double> point, const LossWeights &w, Rng &rng);

// Records which side of every kink (half-sphere fold, box faces, ReLU) the
// evaluation passed through, and how close it came. Gradient checks use it
// to skip finite differences that cross a kink.
struct BranchTrace {
  std::vector<uint8_t> signature;
  double min_margin = std::numeric_limits<double>::infinity();
  void note(bool side, double margin) {
    signature.push_back(side ? 1 : 0);
    if (margin < min_margin) min_margin = margin;
  }
};

// Cotangents over box corners, keyed by relation.
struct BoxCornerGrad {
  Vec lower;
  Vec upper;
};
using BoxGradMap = std::map<RelationIndex, BoxCornerGrad>;

struct DuckLoss {
  double value = 0.0;
  double positive = 0.0;  // mean softplus(dist(r+) - gamma)
  double negative = 0.0;  // mean softplus(gamma - dist(r-))
  Vec grad_point;
};

// Typing loss for one point (polar angles or cartesian coordinates):
//   mean_{r+} -log sigmoid(gamma - dist(r+))
// + mean_{r-} -log sigmoid(dist(r-) - gamma)
// Positives are all of R(e); negatives are the sampled relations (with
// repetition). An empty side contributes nothing. When `box_grads` is set,
// scale * d(loss)/d(corners) is accumulated into it and scale * d/d(point)
// is returned in grad_point.
DuckLoss loss_duck(std::span<const double> point,
                   std::span<const RelationIndex> positives,
                   std::span<const RelationIndex> negatives,
                   const BoxSet &boxes, double gamma, double scale = 1.0,
                   BoxGradMap *box_grads = nullptr,
                   BranchTrace *trace = nullptr);

// (1 / box_dim) * mean over `relations` of width . width. Throws
// EmptyInputError when `relations` is empty.
double l2_box_regularizer(const BoxSet &boxes,
                          std::span<const RelationIndex> relations,
                          double scale = 0.0, BoxGradMap *box_grads = nullptr);

// One mention of a training batch.
struct BatchItem {
  size_t mention = 0;  // index into the prepared mention inputs
  EntityIndex gold = 0;
  // Entities scored by the disambiguation loss; always contains the gold.
  std::vector<EntityIndex> pool;
  // Whether the typing terms apply (the min-relation filter passed and
  // R(gold) is non-empty).
  bool typed = false;
  std::vector<RelationIndex> entity_negatives;
  std::vector<RelationIndex> mention_negatives;
};

struct Batch {
  std::vector<BatchItem> items;
};

struct BatchLoss {
  double l_ed = 0.0;
  double l_duck_entity = 0.0;
  double l_duck_mention = 0.0;
  double l2_reg = 0.0;
  double total = 0.0;
  size_t typed_items = 0;
};


// Draws the negative relations of every typed item, entity role first and
// then mention role, in item order.
void sample_batch_negatives(const EmbeddingState &state,
                            const KnowledgeGraph &g,
                            const std::vector<MentionInput> &mentions,
                            Batch &batch, const LossWeights &w, Rng &rng);

// Mean over the batch of
//   L_ED(m) + lambda_duck (L_Duck(e*) + L_Duck(m) + lambda_l2 l2),
// with the l2 term computed once over the distinct relations used by the
// batch. When `accumulate` is set, gradients are added to the state's
// parameter buffers (the caller zeroes them). Per-item work fans out over
// `threads`; the reduction order is fixed, so results do not depend on the
// thread count.
BatchLoss loss_total(EmbeddingState &state, const KnowledgeGraph &g,
                     const std::vector<MentionInput> &mentions,
                     const Batch &batch, const LossWeights &w, bool accumulate,
                     int threads = 1, BranchTrace *trace = nullptr);

}  // namespace duck

#endif  // DUCK_OBJECTIVE_H_
