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

#include "duck/objective.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "duck/geometry.h"

namespace duck {

namespace {

void check_weight(double v, const char *name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1], got " +
                      std::to_string(v));
  }
}

void add_to(Vec &dst, std::span<const double> src, double scale = 1.0) {
  if (dst.empty()) dst.assign(src.size(), 0.0);
  for (size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
}

BoxCornerGrad &corner_grad(BoxGradMap &map, RelationIndex r, size_t n) {
  auto &entry = map[r];
  if (entry.lower.empty()) {
    entry.lower.assign(n, 0.0);
    entry.upper.assign(n, 0.0);
  }
  return entry;
}

void note_box(BranchTrace &trace, std::span<const double> lower,
              std::span<const double> upper, std::span<const double> point) {
  for (size_t i = 0; i < point.size(); ++i) {
    bool inside = point[i] > lower[i] && point[i] < upper[i];
    double margin = std::min(std::abs(point[i] - lower[i]),
                             std::abs(point[i] - upper[i]));
    trace.note(inside, margin);
  }
}

// Cotangent of the box point back to the Cartesian embedding.
Vec point_to_embedding(BoxMode mode, std::span<const double> v,
                       std::span<const double> grad_point) {
  if (mode == BoxMode::kPolar) return polar_jacobian_vjp(v, grad_point);
  return Vec(grad_point.begin(), grad_point.end());
}

}  // namespace

void LossWeights::validate() const {
  if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
  check_weight(alpha, "alpha");
  check_weight(lambda_duck, "lambda_duck");
  check_weight(lambda_l2, "lambda_l2");
  if (k_negatives < 1) throw ConfigError("k_negatives must be >= 1");
}

double similarity(std::span<const double> ve, std::span<const double> vm) {
  return dot(ve, vm);
}

double loss_ed(std::span<const double> mention, std::span<const double> gold,
               const std::vector<Vec> &negatives) {
  std::vector<std::span<const double>> pool;
  pool.reserve(negatives.size() + 1);
  pool.push_back(gold);
  for (const auto &n : negatives) pool.emplace_back(n);
  return loss_ed_with_grad(mention, pool, 0).value;
}

EdLoss loss_ed_with_grad(std::span<const double> mention,
                         const std::vector<std::span<const double>> &pool,
                         size_t gold_position) {
  if (pool.empty()) throw EmptyInputError("disambiguation pool is empty");
  if (gold_position >= pool.size()) {
    throw RangeError("gold position outside the pool");
  }
  size_t n = pool.size();
  Vec scores(n);
  for (size_t j = 0; j < n; ++j) scores[j] = similarity(pool[j], mention);
  double top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - top);
  double lse = top + std::log(z);

  EdLoss out;
  out.value = std::max(0.0, lse - scores[gold_position]);
  out.grad_mention.assign(mention.size(), 0.0);
  out.grad_pool.resize(n);
  for (size_t j = 0; j < n; ++j) {
    double p = std::exp(scores[j] - lse);
    double c = p - (j == gold_position ? 1.0 : 0.0);
    out.grad_pool[j].resize(mention.size());
    for (size_t i = 0; i < mention.size(); ++i) {
      out.grad_pool[j][i] = c * mention[i];
      out.grad_mention[i] += c * pool[j][i];
    }
  }
  return out;
}

std::vector<std::pair<RelationIndex, double>> negative_distribution(
    const RelationSet &positives, std::span<const double> distances,
    double alpha) {
  check_weight(alpha, "alpha");
  std::vector<std::pair<RelationIndex, double>> out;
  double best = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < distances.size(); ++r) {
    auto rel = static_cast<RelationIndex>(r);
    if (positives.test(rel)) continue;
    out.emplace_back(rel, distances[r]);
    best = std::min(best, distances[r]);
  }
  if (out.empty()) return out;
  double z = 0.0;
  for (auto &[r, d] : out) {
    d = std::exp(-alpha * (d - best));
    z += d;
  }
  for (auto &entry : out) entry.second /= z;
  return out;
}

std::vector<RelationIndex> sample_negative_relations(
    const RelationSet &positives, std::span<const double> distances,
    double alpha, size_t k, Rng &rng) {
  auto dist = negative_distribution(positives, distances, alpha);
  if (dist.empty()) {
    log_warning("entity holds every relation; negative typing term skipped");
    return {};
  }
  Vec cdf(dist.size());
  double acc = 0.0;
  for (size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i].second;
    cdf[i] = acc;
  }
  std::vector<RelationIndex> out(k);
  for (auto &slot : out) {
    double u = rng.uniform() * acc;
    size_t i = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    slot = dist[std::min(i, dist.size() - 1)].first;
  }
  return out;
}

std::vector<RelationIndex> sample_negative_relations(
    const RelationSet &positives, const BoxSet &boxes,
    std::span<const double> point, const LossWeights &w, Rng &rng) {
  Vec distances(boxes.size());
  for (size_t r = 0; r < boxes.size(); ++r) {
    distances[r] = boxes.distance(static_cast<RelationIndex>(r), point);
  }
  return sample_negative_relations(positives, distances, w.alpha,
                                   w.k_negatives, rng);
}

DuckLoss loss_duck(std::span<const double> point,
                   std::span<const RelationIndex> positives,
                   std::span<const RelationIndex> negatives,
                   const BoxSet &boxes, double gamma, double scale,
                   BoxGradMap *box_grads, BranchTrace *trace) {
  DuckLoss out;
  out.grad_point.assign(point.size(), 0.0);
  auto term = [&](RelationIndex r, double sign, double weight) {
    if (r >= boxes.size()) throw RangeError("relation index out of range");
    const Vec &lo = boxes.lower[r];
    const Vec &hi = boxes.upper[r];
    double d = corner_distance(lo, hi, point);
    if (trace) {
      note_box(*trace, lo, hi, point);
      trace->note(d > 0.0, d);
    }
    // sign +1: softplus(d - gamma); sign -1: softplus(gamma - d)
    double x = sign * (d - gamma);
    double upstream = scale * weight * sign * sigmoid(x);
    if (upstream != 0.0) {
      Vec gl(lo.size(), 0.0), gu(lo.size(), 0.0);
      corner_distance_vjp(lo, hi, point, upstream, gl, gu, out.grad_point);
      if (box_grads) {
        auto &entry = corner_grad(*box_grads, r, lo.size());
        for (size_t i = 0; i < lo.size(); ++i) {
          entry.lower[i] += gl[i];
          entry.upper[i] += gu[i];
        }
      }
    }
    return softplus(x);
  };
  if (!positives.empty()) {
    double wp = 1.0 / static_cast<double>(positives.size());
    for (RelationIndex r : positives) out.positive += term(r, 1.0, wp);
    out.positive *= wp;
  }
  if (!negatives.empty()) {
    double wn = 1.0 / static_cast<double>(negatives.size());
    for (RelationIndex r : negatives) out.negative += term(r, -1.0, wn);
    out.negative *= wn;
  }
  out.value = out.positive + out.negative;
  return out;
}

double l2_box_regularizer(const BoxSet &boxes,
                          std::span<const RelationIndex> relations,
                          double scale, BoxGradMap *box_grads) {
  if (relations.empty()) {
    throw EmptyInputError("box regularizer needs at least one relation");
  }
  double total = 0.0;
  size_t n = 0;
  for (RelationIndex r : relations) {
    if (r >= boxes.size()) throw RangeError("relation index out of range");
    const Vec &lo = boxes.lower[r];
    const Vec &hi = boxes.upper[r];
    n = lo.size();
    for (size_t i = 0; i < n; ++i) {
      double width = hi[i] - lo[i];
      total += width * width;
    }
  }
  double norm = 1.0 / (static_cast<double>(n) *
                       static_cast<double>(relations.size()));
  if (box_grads && scale != 0.0) {
    for (RelationIndex r : relations) {
      const Vec &lo = boxes.lower[r];
      const Vec &hi = boxes.upper[r];
      auto &entry = corner_grad(*box_grads, r, lo.size());
      for (size_t i = 0; i < lo.size(); ++i) {
        double g = scale * norm * 2.0 * (hi[i] - lo[i]);
        entry.upper[i] += g;
        entry.lower[i] -= g;
      }
    }
  }
  return total * norm;
}

void sample_batch_negatives(const EmbeddingState &state,
                            const KnowledgeGraph &g,
                            const std::vector<MentionInput> &mentions,
                            Batch &batch, const LossWeights &w, Rng &rng) {
  bool any = std::any_of(batch.items.begin(), batch.items.end(),
                         [](const BatchItem &it) { return it.typed; });
  if (!any) return;
  BoxSet boxes = materialize_boxes(state);
  BoxMode mode = boxes.mode;
  for (auto &item : batch.items) {
    item.entity_negatives.clear();
    item.mention_negatives.clear();
    if (!item.typed) continue;
    if (item.mention >= mentions.size()) {
      throw RangeError("batch refers to an unknown mention");
    }
    const RelationSet &rs = g.relation_set(item.gold);
    Vec pe = box_point(mode, state.encode_entity(item.gold));
    item.entity_negatives = sample_negative_relations(rs, boxes, pe, w, rng);
    Vec pm = box_point(mode, state.encode_mention(mentions[item.mention]));
    item.mention_negatives = sample_negative_relations(rs, boxes, pm, w, rng);
  }
}

namespace {

struct ItemResult {
  double ed = 0.0;
  double duck_entity = 0.0;
  double duck_mention = 0.0;
  Vec grad_mention;              // w.r.t. the projected mention vector
  std::vector<Vec> grad_pool;    // w.r.t. projected pool vectors
  Vec grad_gold;                 // typing-term cotangent on the gold entity
  BoxGradMap boxes;
  BranchTrace trace;
};

}  // namespace

BatchLoss loss_total(EmbeddingState &state, const KnowledgeGraph &g,
                     const std::vector<MentionInput> &mentions,
                     const Batch &batch, const LossWeights &w, bool accumulate,
                     int threads, BranchTrace *trace) {
  w.validate();
  const auto &items = batch.items;
  if (items.empty()) throw EmptyInputError("batch has no mentions");
  size_t count = items.size();
  double inv_b = 1.0 / static_cast<double>(count);

  std::vector<EntityIndex> entities;
  for (const auto &it : items) {
    if (it.mention >= mentions.size()) {
      throw RangeError("batch refers to an unknown mention");
    }
    if (std::find(it.pool.begin(), it.pool.end(), it.gold) == it.pool.end()) {
      throw ConfigError("disambiguation pool must contain the gold entity");
    }
    entities.insert(entities.end(), it.pool.begin(), it.pool.end());
  }
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  auto slot_of = [&](EntityIndex e) {
    return static_cast<size_t>(
        std::lower_bound(entities.begin(), entities.end(), e) -
        entities.begin());
  };

  const Encoder &ent_enc = state.entity_encoder();
  const Encoder &men_enc = state.mention_encoder();
  std::vector<Vec> ent_raw(entities.size()), ent_vec(entities.size());
  parallel_for(entities.size(), threads, [&](size_t i) {
    ent_raw[i] = ent_enc.encode_raw(state.entity_input(entities[i]));
    ent_vec[i] = half_sphere_project(ent_raw[i]);
  });
  std::vector<Vec> men_raw(count), men_vec(count);
  parallel_for(count, threads, [&](size_t i) {
    men_raw[i] = men_enc.encode_raw(state.mention_input(mentions[items[i].mention]));
    men_vec[i] = half_sphere_project(men_raw[i]);
  });

  bool any_typed = std::any_of(items.begin(), items.end(),
                               [](const BatchItem &it) { return it.typed; });
  BoxSet boxes;
  std::vector<BoxParameterizer::Cache> caches;
  if (any_typed) {
    boxes = materialize_boxes(state, (accumulate || trace) ? &caches : nullptr);
  }
  BoxMode mode = state.boxes().mode();
  double duck_scale = w.lambda_duck * inv_b;

  std::vector<ItemResult> results(count);
  parallel_for(count, threads, [&](size_t i) {
    const BatchItem &it = items[i];
    ItemResult &res = results[i];
    std::vector<std::span<const double>> pool;
    pool.reserve(it.pool.size());
    size_t gold_pos = 0;
    for (size_t j = 0; j < it.pool.size(); ++j) {
      if (it.pool[j] == it.gold) gold_pos = j;
      pool.emplace_back(ent_vec[slot_of(it.pool[j])]);
    }
    EdLoss ed = loss_ed_with_grad(men_vec[i], pool, gold_pos);
    res.ed = ed.value;
    res.grad_mention = std::move(ed.grad_mention);
    for (double &x : res.grad_mention) x *= inv_b;
    res.grad_pool = std::move(ed.grad_pool);
    for (auto &gp : res.grad_pool) {
      for (double &x : gp) x *= inv_b;
    }
    if (!it.typed) return;
    auto positives = g.relation_set(it.gold).members();
    if (positives.empty()) return;
    BoxGradMap *bg = accumulate ? &res.boxes : nullptr;
    BranchTrace *tr = trace ? &res.trace : nullptr;

    const Vec &ve = ent_vec[slot_of(it.gold)];
    Vec pe = box_point(mode, ve);
    DuckLoss de = loss_duck(pe, positives, it.entity_negatives, boxes, w.gamma,
                            duck_scale, bg, tr);
    res.duck_entity = de.value;
    res.grad_gold = point_to_embedding(mode, ve, de.grad_point);

    Vec pm = box_point(mode, men_vec[i]);
    DuckLoss dm = loss_duck(pm, positives, it.mention_negatives, boxes,
                            w.gamma, duck_scale, bg, tr);
    res.duck_mention = dm.value;
    Vec gm = point_to_embedding(mode, men_vec[i], dm.grad_point);
    for (size_t k = 0; k < gm.size(); ++k) res.grad_mention[k] += gm[k];
  });

  BatchLoss loss;
  std::vector<RelationIndex> used;
  for (size_t i = 0; i < count; ++i) {
    loss.l_ed += results[i].ed;
    loss.l_duck_entity += results[i].duck_entity;
    loss.l_duck_mention += results[i].duck_mention;
    const BatchItem &it = items[i];
    if (!it.typed) continue;
    auto positives = g.relation_set(it.gold).members();
    if (positives.empty()) continue;
    ++loss.typed_items;
    used.insert(used.end(), positives.begin(), positives.end());
    used.insert(used.end(), it.entity_negatives.begin(),
                it.entity_negatives.end());
    used.insert(used.end(), it.mention_negatives.begin(),
                it.mention_negatives.end());
  }
  loss.l_ed *= inv_b;
  loss.l_duck_entity *= inv_b;
  loss.l_duck_mention *= inv_b;
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  BoxGradMap box_grads;
  if (!used.empty()) {
    loss.l2_reg = l2_box_regularizer(boxes, used, w.lambda_duck * w.lambda_l2,
                                     accumulate ? &box_grads : nullptr);
  }
  loss.total = loss.l_ed +
               w.lambda_duck * (loss.l_duck_entity + loss.l_duck_mention +
                                w.lambda_l2 * loss.l2_reg);

  if (trace) {
    size_t d = state.dim();
    for (const auto &raw : ent_raw) trace->note(raw[d - 1] >= 0, std::abs(raw[d - 1]));
    for (const auto &raw : men_raw) trace->note(raw[d - 1] >= 0, std::abs(raw[d - 1]));
    for (const auto &res : results) {
      trace->signature.insert(trace->signature.end(),
                              res.trace.signature.begin(),
                              res.trace.signature.end());
      trace->min_margin = std::min(trace->min_margin, res.trace.min_margin);
    }
    if (mode == BoxMode::kCartesian) {
      for (RelationIndex r : used) {
        for (double u : caches[r].upper_pre) trace->note(u > 0.0, std::abs(u));
      }
    }
  }

  if (!accumulate) return loss;

  std::vector<Vec> ent_grad(entities.size());
  for (size_t i = 0; i < count; ++i) {
    const BatchItem &it = items[i];
    for (size_t j = 0; j < it.pool.size(); ++j) {
      add_to(ent_grad[slot_of(it.pool[j])], results[i].grad_pool[j]);
    }
    if (!results[i].grad_gold.empty()) {
      add_to(ent_grad[slot_of(it.gold)], results[i].grad_gold);
    }
    for (const auto &[r, cg] : results[i].boxes) {
      auto &entry = corner_grad(box_grads, r, cg.lower.size());
      for (size_t k = 0; k < cg.lower.size(); ++k) {
        entry.lower[k] += cg.lower[k];
        entry.upper[k] += cg.upper[k];
      }
    }
  }
  for (size_t s = 0; s < entities.size(); ++s) {
    if (ent_grad[s].empty()) continue;
    half_sphere_project_vjp(ent_raw[s], ent_grad[s]);
    state.entity_encoder().backward(state.entity_input(entities[s]),
                                    ent_grad[s]);
  }
  for (size_t i = 0; i < count; ++i) {
    Vec gm = results[i].grad_mention;
    half_sphere_project_vjp(men_raw[i], gm);
    state.mention_encoder().backward(
        state.mention_input(mentions[items[i].mention]), gm);
  }
  for (const auto &[r, cg] : box_grads) {
    state.boxes().backward(state.relation_embedding(r), caches[r], cg.lower,
                           cg.upper);
  }
  return loss;
}

}  // namespace duck
