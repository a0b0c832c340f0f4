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
#include <map>
#include <set>

#include "doctest.h"
#include "duck/objective.h"
#include "duck/train.h"
#include "support.h"

using namespace duck;
using duck::testing::normal_vec;

namespace {

double neg_log_sigmoid(double x) { return std::log1p(std::exp(-x)); }

struct Fixture {
  duck::testing::ToyTask task;
  EmbeddingState state;
  std::vector<MentionInput> mentions;
  std::vector<Batch> batches;

  explicit Fixture(BoxMode mode = BoxMode::kPolar, size_t hard = 0) {
    task = duck::testing::load_toy(
        generate_toy(duck::testing::small_toy_config()));
    ModelConfig mc;
    mc.dim = 6;
    mc.box_mode = mode;
    mc.seed = 3;
    state = EmbeddingState::create(mc, task.graph);
    mentions = state.prepare_mentions(task.train);
    StageConfig stage;
    stage.batch_size = 4;
    stage.max_entities = 8;
    HardNegatives hn;
    if (hard > 0) hn = mine_hard_negatives(state, mentions, hard);
    Rng rng(9);
    batches = build_batches(mentions, task.graph, stage,
                            hard > 0 ? &hn : nullptr, rng);
  }
};

LossWeights weights() {
  LossWeights w;
  w.gamma = 0.5;
  w.alpha = 0.5;
  w.lambda_duck = 0.7;
  w.lambda_l2 = 0.3;
  w.k_negatives = 5;
  return w;
}

}  // namespace

TEST_CASE("similarity") {
  CHECK(similarity(Vec{1, 0}, Vec{0, 3}) == 0.0);
  Vec v{0.5, -1.5, 2.0};
  CHECK(similarity(v, v) == doctest::Approx(norm2(v) * norm2(v)));
  CHECK(similarity(Vec{1, 2, 2}, Vec{2, 0, 1}) == 4.0);
  CHECK_THROWS_AS(similarity(Vec{1, 2}, Vec{1}), DimensionError);
}

TEST_CASE("loss_ed: examples") {
  Vec m{1.0};
  CHECK(loss_ed(m, Vec{3.0}, {}) == 0.0);
  CHECK(loss_ed(m, Vec{1.5}, {Vec{1.5}}) == doctest::Approx(std::log(2.0)));
  double expected = -2.0 + std::log(std::exp(2.0) + std::exp(1.0) + 1.0);
  CHECK(loss_ed(m, Vec{2.0}, {Vec{1.0}, Vec{0.0}}) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.4076).epsilon(1e-4));
}

TEST_CASE("loss_ed: shift invariance and finiteness") {
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    Vec scores = normal_vec(rng, 2 + rng.below(6));
    double c = 50.0 * rng.normal();
    Vec m{1.0};
    std::vector<Vec> neg, neg_shift;
    for (size_t j = 1; j < scores.size(); ++j) {
      neg.push_back(Vec{scores[j]});
      neg_shift.push_back(Vec{scores[j] + c});
    }
    double a = loss_ed(m, Vec{scores[0]}, neg);
    double b = loss_ed(m, Vec{scores[0] + c}, neg_shift);
    CHECK(a >= 0.0);
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(c)));
  }
  CHECK(std::isfinite(loss_ed(Vec{1.0}, Vec{1e6}, {Vec{-1e6}, Vec{1e6}})));
}

TEST_CASE("loss_ed_with_grad: value and finite differences") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    size_t d = 2 + rng.below(5), n = 1 + rng.below(6);
    Vec m = normal_vec(rng, d);
    std::vector<Vec> pool;
    for (size_t j = 0; j < n; ++j) pool.push_back(normal_vec(rng, d));
    std::vector<std::span<const double>> spans(pool.begin(), pool.end());
    size_t gold = rng.below(n);
    auto out = loss_ed_with_grad(m, spans, gold);
    std::vector<Vec> negs;
    for (size_t j = 0; j < n; ++j) {
      if (j != gold) negs.push_back(pool[j]);
    }
    CHECK(out.value == doctest::Approx(loss_ed(m, pool[gold], negs)));
    const double h = 1e-5;
    for (size_t k = 0; k < d; ++k) {
      Vec mp = m, mm = m;
      mp[k] += h;
      mm[k] -= h;
      double fd = (loss_ed(mp, pool[gold], negs) - loss_ed(mm, pool[gold], negs)) /
                  (2 * h);
      CHECK(out.grad_mention[k] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK_THROWS_AS(loss_ed_with_grad(Vec{1.0}, {}, 0), EmptyInputError);
}

TEST_CASE("negative_distribution: uniform at alpha 0, softmax otherwise") {
  RelationSet pos(8, {1, 4});
  Vec dist{0.3, 9.0, 1.2, 0.0, 9.0, 2.5};
  auto uni = negative_distribution(pos, dist, 0.0);
  REQUIRE(uni.size() == 4);
  for (auto [r, p] : uni) {
    CHECK_FALSE(pos.test(r));
    CHECK(p == doctest::Approx(0.25));
  }
  auto soft = negative_distribution(pos, dist, 1.0);
  double z = std::exp(-0.3) + std::exp(-1.2) + std::exp(0.0) + std::exp(-2.5);
  CHECK(soft[0].first == 0);
  CHECK(soft[0].second == doctest::Approx(std::exp(-0.3) / z));
  CHECK(soft[3].first == 5);
  CHECK(soft[3].second == doctest::Approx(std::exp(-2.5) / z));
}

TEST_CASE("sample_negative_relations: full relation set gives no negatives") {
  RelationSet all(64, {0, 1, 2});
  Vec dist{1.0, 2.0, 3.0};
  Rng rng(43);
  set_warnings_enabled(false);
  CHECK(sample_negative_relations(all, dist, 0.5, 10, rng).empty());
  set_warnings_enabled(true);
}

TEST_CASE("sample_negative_relations: alpha 0 is uniform") {
  RelationSet pos(64, {2});
  Vec dist{0.1, 5.0, 0.0, 3.0, 0.7};
  Rng rng(44);
  const size_t n = 20000;
  auto draws = sample_negative_relations(pos, dist, 0.0, n, rng);
  REQUIRE(draws.size() == n);
  std::map<RelationIndex, size_t> counts;
  for (auto r : draws) counts[r]++;
  CHECK(counts.count(2) == 0);
  double p = 0.25, sigma = std::sqrt(n * p * (1 - p));
  for (RelationIndex r : {0u, 1u, 3u, 4u}) {
    CHECK(std::abs(static_cast<double>(counts[r]) - n * p) <= 3 * sigma);
  }
}

TEST_CASE("sample_negative_relations: k draws follow the seed") {
  RelationSet pos(64, {0});
  Vec dist{0.0, 1.0, 2.0, 3.0};
  Rng a(45), b(45);
  CHECK(sample_negative_relations(pos, dist, 1.0, 512, a) ==
        sample_negative_relations(pos, dist, 1.0, 512, b));
}

TEST_CASE("loss_duck: scalar examples") {
  BoxSet boxes{BoxMode::kPolar, {{0.5}, {0.5}}, {{1.5}, {1.5}}};
  std::vector<RelationIndex> pos{0}, none;
  auto centered = loss_duck(Vec{1.0}, pos, none, boxes, 2.0);
  CHECK(centered.value == doctest::Approx(neg_log_sigmoid(2.0)));
  CHECK(centered.value == doctest::Approx(0.1269).epsilon(1e-4));

  // Offset 1.0 from a unit box sits at distance 1.25.
  std::vector<RelationIndex> neg{1};
  auto at_margin = loss_duck(Vec{2.0}, none, neg, boxes, 1.25);
  CHECK(at_margin.negative == doctest::Approx(std::log(2.0)));
  CHECK(at_margin.value == doctest::Approx(std::log(2.0)));
}

TEST_CASE("loss_duck: means over positives and sampled negatives") {
  BoxSet boxes{BoxMode::kPolar,
               {{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.5}},
               {{1.0, 1.0}, {2.0, 2.0}, {3.0, 1.5}}};
  Vec pt{0.8, 1.1};
  std::vector<RelationIndex> pos{0, 1}, neg{2, 2, 0};
  double gamma = 0.4;
  auto out = loss_duck(pt, pos, neg, boxes, gamma);
  double p = 0.5 * (neg_log_sigmoid(gamma - boxes.distance(0, pt)) +
                    neg_log_sigmoid(gamma - boxes.distance(1, pt)));
  double n = (2 * neg_log_sigmoid(boxes.distance(2, pt) - gamma) +
              neg_log_sigmoid(boxes.distance(0, pt) - gamma)) /
             3.0;
  CHECK(out.positive == doctest::Approx(p).epsilon(1e-14));
  CHECK(out.negative == doctest::Approx(n).epsilon(1e-14));
  CHECK(out.value == doctest::Approx(p + n).epsilon(1e-14));
}

TEST_CASE("loss_duck: positive term decreases as the point moves in") {
  BoxSet boxes{BoxMode::kPolar, {{1.0, 1.0}}, {{1.5, 1.5}}};
  std::vector<RelationIndex> pos{0}, none;
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 0; s <= 20; ++s) {
    double t = 3.0 - 0.0875 * s;
    double v = loss_duck(Vec{t, t}, pos, none, boxes, 2.0).positive;
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("loss_duck: point gradient against finite differences") {
  Rng rng(46);
  BoxSet boxes{BoxMode::kPolar, {}, {}};
  for (int r = 0; r < 4; ++r) {
    Vec lo = duck::testing::uniform_vec(rng, 3, 0.0, 2.0);
    Vec hi = lo;
    for (double &x : hi) x += 0.3 + rng.uniform();
    boxes.lower.push_back(lo);
    boxes.upper.push_back(hi);
  }
  std::vector<RelationIndex> pos{0, 1}, neg{2, 3, 3};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vec pt = duck::testing::uniform_vec(rng, 3, 0.0, 3.0);
    bool near_face = false;
    for (RelationIndex r = 0; r < 4; ++r) {
      near_face |= face_margin(boxes.lower[r], boxes.upper[r], pt) < 1e-3;
    }
    if (near_face) continue;
    auto out = loss_duck(pt, pos, neg, boxes, 0.7);
    for (size_t k = 0; k < 3; ++k) {
      const double h = 1e-5;
      Vec pp = pt, pm = pt;
      pp[k] += h;
      pm[k] -= h;
      double fd = (loss_duck(pp, pos, neg, boxes, 0.7).value -
                   loss_duck(pm, pos, neg, boxes, 0.7).value) /
                  (2 * h);
      double err = std::abs(fd - out.grad_point[k]) /
                   std::max({std::abs(fd), std::abs(out.grad_point[k]), 1e-6});
      worst = std::max(worst, err);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("l2_box_regularizer") {
  BoxSet boxes{BoxMode::kPolar,
               {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}},
               {{0.1, 0.2, 0.2}, {1.0, 1.0, 1.0}}};
  std::vector<RelationIndex> first{0}, second{1}, both{0, 1};
  CHECK(l2_box_regularizer(boxes, first) == doctest::Approx(0.03));
  CHECK(l2_box_regularizer(boxes, second) == 0.0);
  CHECK(l2_box_regularizer(boxes, both) == doctest::Approx(0.015));
  CHECK_THROWS_AS(l2_box_regularizer(boxes, {}), EmptyInputError);
}

TEST_CASE("LossWeights validation") {
  LossWeights w;
  CHECK(w.gamma == 2.0);
  CHECK(w.lambda_duck == 0.1);
  CHECK(w.lambda_l2 == 0.1);
  CHECK(w.k_negatives == 512);
  w.validate();
  w.alpha = 1.5;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.k_negatives = 0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.lambda_duck = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("loss_total: no-types weight leaves only the disambiguation term") {
  Fixture f;
  LossWeights w = weights();
  w.lambda_duck = 0.0;
  Rng rng(47);
  for (auto &batch : f.batches) {
    sample_batch_negatives(f.state, f.task.graph, f.mentions, batch, w, rng);
    auto loss = loss_total(f.state, f.task.graph, f.mentions, batch, w, false);
    CHECK(loss.total == loss.l_ed);
  }
}

TEST_CASE("loss_total: decomposition and independent recomputation") {
  for (BoxMode mode : {BoxMode::kPolar, BoxMode::kCartesian}) {
    Fixture f(mode);
    LossWeights w = weights();
    Rng rng(48);
    BoxSet boxes = materialize_boxes(f.state);
    std::vector<Vec> entity_vecs = f.state.encode_all_entities();
    for (auto &batch : f.batches) {
      sample_batch_negatives(f.state, f.task.graph, f.mentions, batch, w, rng);
      auto loss = loss_total(f.state, f.task.graph, f.mentions, batch, w, false);
      CHECK(std::abs(loss.total -
                     (loss.l_ed + w.lambda_duck * (loss.l_duck_entity +
                                                   loss.l_duck_mention +
                                                   w.lambda_l2 * loss.l2_reg))) <=
            1e-12);

      double ed = 0.0, de = 0.0, dm = 0.0;
      std::set<RelationIndex> used;
      for (const auto &item : batch.items) {
        Vec vm = f.state.encode_mention(f.mentions[item.mention]);
        std::vector<Vec> negs;
        for (auto e : item.pool) {
          if (e != item.gold) negs.push_back(entity_vecs[e]);
        }
        ed += loss_ed(vm, entity_vecs[item.gold], negs);
        if (!item.typed) continue;
        auto pos = f.task.graph.relation_set(item.gold).members();
        used.insert(pos.begin(), pos.end());
        used.insert(item.entity_negatives.begin(), item.entity_negatives.end());
        used.insert(item.mention_negatives.begin(), item.mention_negatives.end());
        de += loss_duck(box_point(mode, entity_vecs[item.gold]), pos,
                        item.entity_negatives, boxes, w.gamma)
                  .value;
        dm += loss_duck(box_point(mode, vm), pos, item.mention_negatives, boxes,
                        w.gamma)
                  .value;
      }
      double n = static_cast<double>(batch.items.size());
      CHECK(loss.l_ed == doctest::Approx(ed / n).epsilon(1e-12));
      CHECK(loss.l_duck_entity == doctest::Approx(de / n).epsilon(1e-12));
      CHECK(loss.l_duck_mention == doctest::Approx(dm / n).epsilon(1e-12));
      if (!used.empty()) {
        std::vector<RelationIndex> rel(used.begin(), used.end());
        CHECK(loss.l2_reg ==
              doctest::Approx(l2_box_regularizer(boxes, rel)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("loss_total: alpha changes sampling only") {
  Fixture f;
  LossWeights w = weights();
  Rng rng(49);
  auto &batch = f.batches.front();
  sample_batch_negatives(f.state, f.task.graph, f.mentions, batch, w, rng);
  LossWeights w0 = w, w1 = w;
  w0.alpha = 0.0;
  w1.alpha = 1.0;
  auto a = loss_total(f.state, f.task.graph, f.mentions, batch, w0, false);
  auto b = loss_total(f.state, f.task.graph, f.mentions, batch, w1, false);
  CHECK(a.total == b.total);
}

TEST_CASE("loss_total: thread count does not change the result") {
  Fixture f(BoxMode::kPolar, 2);
  LossWeights w = weights();
  Rng rng(50);
  auto &batch = f.batches.front();
  sample_batch_negatives(f.state, f.task.graph, f.mentions, batch, w, rng);

  auto grads = [&](int threads) {
    f.state.zero_grads();
    auto loss =
        loss_total(f.state, f.task.graph, f.mentions, batch, w, true, threads);
    Vec all;
    f.state.visit_params([&](const Param &p) {
      all.insert(all.end(), p.grad.begin(), p.grad.end());
    });
    all.push_back(loss.total);
    return all;
  };
  Vec one = grads(1), again = grads(1), four = grads(4);
  CHECK(one == again);
  REQUIRE(one.size() == four.size());
  for (size_t i = 0; i < one.size(); ++i) {
    CHECK(std::abs(one[i] - four[i]) <= 1e-10);
  }
}

TEST_CASE("loss_total: frozen relation matrix is never touched") {
  Fixture f;
  uint64_t before = hash_values(f.state.relation_matrix().value);
  LossWeights w = weights();
  Rng rng(51);
  for (auto &batch : f.batches) {
    sample_batch_negatives(f.state, f.task.graph, f.mentions, batch, w, rng);
    f.state.zero_grads();
    loss_total(f.state, f.task.graph, f.mentions, batch, w, true);
    apply_gradients(f.state, OptimizerConfig{}, 0.01);
  }
  CHECK(hash_values(f.state.relation_matrix().value) == before);
}
