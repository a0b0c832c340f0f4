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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "duck/eval.h"
#include "duck/train.h"
#include "support.h"

using namespace duck;

namespace {

std::vector<MentionInput> golds(std::initializer_list<EntityIndex> ids) {
  std::vector<MentionInput> out;
  for (auto e : ids) {
    MentionInput m;
    m.gold = e;
    out.push_back(m);
  }
  return out;
}

KnowledgeGraph chain_graph(size_t n) {
  GraphBuilder b;
  for (size_t e = 0; e < n; ++e) {
    b.add_triple("e" + std::to_string(e), "r" + std::to_string(e % 3), "e0");
  }
  return b.build();
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::parse_text(
      "dim = 6\n"
      "seed = 17\n"
      "gamma = 0.5\n"
      "k = 8\n"
      "log_every = 5\n"
      "stage.1.epochs = 2\n"
      "stage.1.batch_size = 6\n"
      "stage.1.max_entities = 12\n"
      "stage.1.warmup = 3\n"
      "stage.2.epochs = 2\n"
      "stage.2.batch_size = 6\n"
      "stage.2.max_entities = 12\n"
      "stage.2.hard_negatives = 2\n"
      "stage.2.grad_accum = 2\n"
      "stage.2.warmup = 2\n"
      "stage.2.linear_decay = true\n");
  return c;
}

std::string state_bytes(const EmbeddingState &s) {
  std::ostringstream out;
  s.write(out);
  return out.str();
}

}  // namespace

TEST_CASE("build_batches: in-batch pools") {
  auto g = chain_graph(6);
  StageConfig stage;
  stage.batch_size = 4;
  stage.max_entities = 32;
  Rng rng(1);
  auto distinct = golds({0, 1, 2, 3});
  auto batches = build_batches(distinct, g, stage, nullptr, rng);
  REQUIRE(batches.size() == 1);
  for (const auto &item : batches[0].items) {
    CHECK(item.pool.size() == 4);
    CHECK(item.pool.front() == item.gold);
  }

  auto shared = golds({0, 0, 1, 2});
  batches = build_batches(shared, g, stage, nullptr, rng);
  for (const auto &item : batches[0].items) {
    CHECK(item.pool.size() == 3);
    CHECK(std::count(item.pool.begin(), item.pool.end(), item.gold) == 1);
  }
}

TEST_CASE("build_batches: cap keeps the gold and prefers hard negatives") {
  auto g = chain_graph(12);
  StageConfig stage;
  stage.batch_size = 4;
  stage.max_entities = 4;
  stage.hard_negatives = 2;
  auto mentions = golds({0, 1, 2, 3});
  HardNegatives hard{{8, 9, 10}, {8, 9, 10}, {8, 9, 10}, {8, 9, 10}};
  Rng rng(2);
  auto batches = build_batches(mentions, g, stage, &hard, rng);
  for (const auto &item : batches[0].items) {
    REQUIRE(item.pool.size() == 4);
    CHECK(item.pool[0] == item.gold);
    CHECK(item.pool[1] == 8);
    CHECK(item.pool[2] == 9);
  }
}

TEST_CASE("build_batches: shuffles with the seed and skips out-of-KB mentions") {
  auto g = chain_graph(20);
  StageConfig stage;
  stage.batch_size = 3;
  std::vector<MentionInput> mentions;
  for (EntityIndex e = 0; e < 20; ++e) mentions.push_back(golds({e})[0]);
  mentions.push_back(MentionInput{});
  Rng a(5), b(5);
  auto x = build_batches(mentions, g, stage, nullptr, a);
  auto y = build_batches(mentions, g, stage, nullptr, b);
  REQUIRE(x.size() == 7);
  size_t total = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    REQUIRE(x[i].items.size() == y[i].items.size());
    for (size_t j = 0; j < x[i].items.size(); ++j) {
      CHECK(x[i].items[j].mention == y[i].items[j].mention);
      CHECK(x[i].items[j].mention != 20);
    }
    total += x[i].items.size();
  }
  CHECK(total == 20);
}

TEST_CASE("build_batches: min-relation filter only switches typing off") {
  GraphBuilder b;
  for (int r = 0; r < 5; ++r) b.add_triple("rich", "r" + std::to_string(r), "x");
  b.add_triple("poor", "r0", "x");
  auto g = b.build();
  StageConfig stage;
  stage.batch_size = 3;
  stage.min_relations = 5;
  auto mentions = golds({g.entities().at("rich"), g.entities().at("poor"),
                         g.entities().at("x")});
  Rng rng(3);
  auto batches = build_batches(mentions, g, stage, nullptr, rng);
  for (const auto &item : batches[0].items) {
    CHECK(item.typed == (item.gold == g.entities().at("rich")));
    CHECK(item.pool.size() == 3);
  }
}

TEST_CASE("mine_hard_negatives agrees with a full score matrix") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  ModelConfig mc;
  mc.dim = 5;
  mc.seed = 21;
  auto state = EmbeddingState::create(mc, task.graph);
  auto mentions = state.prepare_mentions(task.train);
  auto hard = mine_hard_negatives(state, mentions, 4);
  CHECK(hard == mine_hard_negatives(state, mentions, 4, 3));
  auto ents = state.encode_all_entities();
  for (size_t i = 0; i < mentions.size(); ++i) {
    EntityIndex gold = *mentions[i].gold;
    Vec vm = state.encode_mention(mentions[i]);
    std::vector<EntityIndex> order;
    for (EntityIndex e = 0; e < ents.size(); ++e) {
      if (e != gold) order.push_back(e);
    }
    std::stable_sort(order.begin(), order.end(), [&](EntityIndex a, EntityIndex b) {
      return dot(ents[a], vm) > dot(ents[b], vm);
    });
    order.resize(4);
    CHECK(hard[i] == order);
  }
}

TEST_CASE("run_stage: zero learning rate leaves parameters unchanged") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  c.stages.resize(1);
  c.stages[0].lr_max = 0.0;
  c.stages[0].epochs = 1;
  auto state = EmbeddingState::create(c.model, task.graph);
  auto mentions = state.prepare_mentions(task.train);
  auto a = state, b = state;
  auto ra = run_stage(a, c, 0, task.graph, mentions, nullptr, nullptr);
  auto rb = run_stage(b, c, 0, task.graph, mentions, nullptr, nullptr);
  std::vector<uint64_t> before, after;
  state.visit_params([&](const Param &p) { before.push_back(hash_values(p.value)); });
  a.visit_params([&](const Param &p) { after.push_back(hash_values(p.value)); });
  CHECK(before == after);
  REQUIRE(!ra.empty());
  REQUIRE(ra.size() == rb.size());
  CHECK(ra.back().total == rb.back().total);
}

TEST_CASE("run_stage: disambiguation loss falls without typing") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  c.stages.resize(1);
  c.stages[0].epochs = 30;
  c.stages[0].lr_max = 0.02;
  c.loss.lambda_duck = 0.0;
  c.log_every = 1000000;
  auto state = EmbeddingState::create(c.model, task.graph);
  auto mentions = state.prepare_mentions(task.train);
  std::vector<double> losses;
  for (size_t round = 0; round < 4; ++round) {
    auto rec = run_stage(state, c, 0, task.graph, mentions, nullptr, nullptr);
    REQUIRE(rec.size() == 1);
    CHECK(rec[0].total == rec[0].l_ed);
    losses.push_back(rec[0].l_ed);
  }
  for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("run_stage: loss decomposition holds in every record") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  c.log_every = 1;
  c.stages.resize(1);
  auto state = EmbeddingState::create(c.model, task.graph);
  auto mentions = state.prepare_mentions(task.train);
  auto w = c.stage_weights(0);
  for (const auto &r : run_stage(state, c, 0, task.graph, mentions, nullptr, nullptr)) {
    double sum = r.l_ed + w.lambda_duck * (r.l_duck_entity + r.l_duck_mention +
                                           w.lambda_l2 * r.l2);
    CHECK(std::abs(sum - r.total) <= 1e-12);
    CHECK(r.containment_rate >= 0.0);
    CHECK(r.containment_rate <= 1.0);
  }
}

TEST_CASE("run_stage: non-finite loss aborts with a diagnostic") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  auto state = EmbeddingState::create(c.model, task.graph);
  auto mentions = state.prepare_mentions(task.train);
  for (double &x : state.entity_encoder().table.value) x = NAN;
  try {
    run_stage(state, c, 0, task.graph, mentions, nullptr, nullptr);
    FAIL("expected a numeric error");
  } catch (const NumericError &e) {
    std::string msg = e.what();
    CHECK(msg.find("norm") != std::string::npos);
  }
}

TEST_CASE("run_training: a single stage matches run_stage") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  c.stages.resize(1);
  auto full = run_training(c, task.graph, task.train, nullptr);
  std::vector<std::string> ids;
  for (const auto &m : task.train.mentions) ids.push_back(m.id);
  auto state = EmbeddingState::create(c.model, task.graph, ids);
  auto mentions = state.prepare_mentions(task.train);
  auto rec = run_stage(state, c, 0, task.graph, mentions, nullptr, nullptr);
  CHECK(state_bytes(state) == state_bytes(full.state));
  REQUIRE(rec.size() == full.records.size());
  CHECK(rec.back().total == full.records.back().total);
}

TEST_CASE("run_training: deterministic for a fixed seed") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  c.threads = 2;
  auto a = run_training(c, task.graph, task.train, nullptr);
  auto b = run_training(c, task.graph, task.train, nullptr);
  CHECK(state_bytes(a.state) == state_bytes(b.state));
  c.seed = 18;
  c.model.seed = 18;
  auto other = run_training(c, task.graph, task.train, nullptr);
  CHECK(state_bytes(a.state) != state_bytes(other.state));
}

TEST_CASE("run_training: empty training set") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  CHECK_THROWS_AS(run_training(small_config(), task.graph, Dataset{}, nullptr),
                  EmptyInputError);
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.config_text = "dim=4\n";
  ck.progress.stage = 1;
  ck.progress.epoch = 2;
  ck.progress.batch = 3;
  ck.progress.stage_steps = 17;
  ck.progress.sum_total = 0.125;
  ck.hard = {{1, 2}, {}, {5}};
  ck.state_blob = std::string("\0abc", 4);
  ck.best_blob = "best";
  ck.best_f1 = 0.75;
  ck.best_loss = 1.5;
  std::stringstream buf;
  ck.write(buf);
  auto r = Checkpoint::read(buf);
  CHECK(r.config_text == ck.config_text);
  CHECK(r.progress.stage == 1);
  CHECK(r.progress.epoch == 2);
  CHECK(r.progress.batch == 3);
  CHECK(r.progress.stage_steps == 17);
  CHECK(r.progress.sum_total == 0.125);
  CHECK(r.hard == ck.hard);
  CHECK(r.state_blob == ck.state_blob);
  CHECK(r.best_blob == "best");
  CHECK(r.best_f1 == 0.75);
  CHECK(r.best_loss == 1.5);
  std::stringstream garbage("not a checkpoint");
  CHECK_THROWS_AS(Checkpoint::read(garbage), ParseError);
}

TEST_CASE("resumed run matches the uninterrupted run") {
  auto task = duck::testing::load_toy(generate_toy(duck::testing::small_toy_config()));
  TrainConfig c = small_config();
  auto dir = duck::testing::scratch_dir("resume");
  Validation val;
  val.dataset = &task.val;
  val.candidates = &task.candidates;

  TrainOptions plain;
  plain.checkpoint_path = dir + "/full.bin";
  auto reference = [&] {
    auto s = EmbeddingState::create(c.model, task.graph);
    val.inputs = s.prepare_mentions(task.val);
    return run_training(c, task.graph, task.train, &val, plain);
  }();
  CHECK_FALSE(reference.interrupted);

  for (size_t stop : {1, 4, 7, 11, 18, 22}) {
    TrainOptions first;
    first.checkpoint_path = dir + "/part.bin";
    first.stop_after_steps = stop;
    auto partial = run_training(c, task.graph, task.train, &val, first);
    REQUIRE(partial.interrupted);
    auto ck = Checkpoint::load(first.checkpoint_path);
    TrainOptions second;
    second.checkpoint_path = dir + "/part.bin";
    second.resume = &ck;
    auto resumed = run_training(c, task.graph, task.train, &val, second);
    CHECK_FALSE(resumed.interrupted);
    CHECK(state_bytes(resumed.state) == state_bytes(reference.state));
    std::ifstream a(dir + "/full.bin", std::ios::binary),
        b(dir + "/part.bin", std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }

  TrainConfig other = c;
  other.loss.gamma = 0.75;
  auto ck = Checkpoint::load(dir + "/full.bin");
  TrainOptions bad;
  bad.resume = &ck;
  CHECK_THROWS_AS(run_training(other, task.graph, task.train, nullptr, bad),
                  ConfigError);
}

TEST_CASE("report records serialize with the documented keys") {
  ReportRecord r;
  r.stage = 2;
  r.step = 10;
  r.total = 1.5;
  auto j = r.to_json();
  for (const char *key : {"\"step\"", "\"l_ed\"", "\"l_duck_e\"", "\"l_duck_m\"",
                          "\"l2\"", "\"total\"", "\"containment_rate\""}) {
    CHECK(j.find(key) != std::string::npos);
  }
  CHECK(j.find("val_f1") == std::string::npos);
  r.val_f1 = 0.5;
  CHECK(r.to_json().find("\"val_f1\"") != std::string::npos);
}
