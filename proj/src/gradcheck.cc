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

#include "duck/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "duck/kg.h"
#include "duck/model.h"
#include "duck/objective.h"
#include "json.hpp"

namespace duck {

namespace {

struct Problem {
  KnowledgeGraph graph;
  EmbeddingState state;
  std::vector<MentionInput> mentions;
  Batch batch;
  LossWeights weights;
};

Problem draw_problem(const GradcheckOptions &o, size_t trial, size_t attempt) {
  Rng rng(derive_seed(o.seed, "gradcheck", {trial, attempt}));
  auto between = [&](size_t lo, size_t hi) {
    return lo + static_cast<size_t>(rng.below(hi - lo + 1));
  };
  size_t d = o.dims[rng.below(o.dims.size())];
  size_t nr = between(o.min_relations, o.max_relations);
  size_t ne = between(o.min_entities, o.max_entities);

  GraphBuilder builder;
  for (size_t e = 0; e < ne; ++e) builder.add_entity("e" + std::to_string(e));
  for (size_t r = 0; r < nr; ++r) builder.add_relation("r" + std::to_string(r));
  for (size_t e = 0; e < ne; ++e) {
    for (size_t r = 0; r < nr; ++r) {
      if (rng.uniform() < 0.5) {
        builder.add_triple("e" + std::to_string(e), "r" + std::to_string(r),
                           "e" + std::to_string(rng.below(ne)));
      }
    }
  }
  Problem p{builder.build(), {}, {}, {}, {}};

  ModelConfig mc;
  mc.dim = d;
  mc.seed = rng.next();
  mc.box_mode = o.mode ? *o.mode : (trial % 2 == 0 ? BoxMode::kPolar
                                                   : BoxMode::kCartesian);
  mc.entity_encoder = {EncoderKind::kTable, 16, 16};
  bool hashed = rng.below(2) == 0;
  mc.mention_encoder = {hashed ? EncoderKind::kHashedBag : EncoderKind::kTable,
                        16, 16};
  size_t nm = between(2, 4);
  std::vector<std::string> ids;
  for (size_t m = 0; m < nm; ++m) ids.push_back("m" + std::to_string(m));
  p.state = EmbeddingState::create(mc, p.graph, ids);

  for (size_t m = 0; m < nm; ++m) {
    MentionInput in;
    in.gold = static_cast<EntityIndex>(rng.below(ne));
    if (hashed) {
      std::vector<std::string> toks;
      size_t n = between(2, 6);
      for (size_t t = 0; t < n; ++t) toks.push_back("w" + std::to_string(rng.below(40)));
      in.features = hash_bag(toks, mc.mention_encoder.buckets);
    } else {
      in.row = m;
    }
    p.mentions.push_back(std::move(in));
  }

  p.weights.gamma = 0.5 + 2.5 * rng.uniform();
  p.weights.alpha = rng.uniform();
  p.weights.lambda_duck = 0.2 + 0.8 * rng.uniform();
  p.weights.lambda_l2 = rng.uniform();
  p.weights.k_negatives = between(1, 5);

  for (size_t m = 0; m < nm; ++m) {
    BatchItem item;
    item.mention = m;
    item.gold = *p.mentions[m].gold;
    item.pool.push_back(item.gold);
    size_t extra = between(0, std::min<size_t>(3, ne - 1));
    while (item.pool.size() < extra + 1) {
      auto e = static_cast<EntityIndex>(rng.below(ne));
      if (std::find(item.pool.begin(), item.pool.end(), e) == item.pool.end()) {
        item.pool.push_back(e);
      }
    }
    rng.shuffle(item.pool);
    item.typed = p.graph.relation_set(item.gold).cardinality() > 0;
    p.batch.items.push_back(std::move(item));
  }
  sample_batch_negatives(p.state, p.graph, p.mentions, p.batch, p.weights, rng);
  return p;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions &o) {
  if (o.dims.empty()) throw ConfigError("gradcheck needs at least one dimension");
  for (size_t d : o.dims) {
    if (d < 2) throw ConfigError("gradcheck dimensions must be >= 2");
  }
  if (o.min_relations < 1 || o.min_relations > o.max_relations ||
      o.min_entities < 1 || o.min_entities > o.max_entities) {
    throw ConfigError("gradcheck size ranges are empty");
  }
  if (!(o.step > 0.0)) throw ConfigError("gradcheck step must be > 0");

  set_warnings_enabled(false);

  GradcheckReport rep;
  for (size_t trial = 0; trial < o.trials; ++trial) {
    Problem p;
    BranchTrace base;
    for (size_t attempt = 0;; ++attempt) {
      p = draw_problem(o, trial, attempt);
      p.state.zero_grads();
      base = BranchTrace{};
      loss_total(p.state, p.graph, p.mentions, p.batch, p.weights, true, 1,
                 &base);
      if (base.min_margin >= o.margin) break;
      ++rep.redrawn;
      if (attempt > 100) throw NumericError("gradcheck could not draw a problem");
    }
    ++rep.trials;

    std::vector<Param *> params;
    p.state.visit_params([&](Param &param) { params.push_back(&param); });
    for (Param *param : params) {
      for (size_t i = 0; i < param->size(); ++i) {
        double analytic = param->grad[i];
        double saved = param->value[i];
        BranchTrace tp, tm;
        param->value[i] = saved + o.step;
        double fp = loss_total(p.state, p.graph, p.mentions, p.batch, p.weights,
                               false, 1, &tp)
                        .total;
        param->value[i] = saved - o.step;
        double fm = loss_total(p.state, p.graph, p.mentions, p.batch, p.weights,
                               false, 1, &tm)
                        .total;
        param->value[i] = saved;
        if (tp.signature != base.signature || tm.signature != base.signature) {
          ++rep.excluded;
          continue;
        }
        double numeric = (fp - fm) / (2.0 * o.step);
        double scale = std::max({std::abs(analytic), std::abs(numeric), o.floor});
        double rel = std::abs(analytic - numeric) / scale;
        ++rep.checked;
        if (rel > o.tolerance) ++rep.failures;
        if (rel > rep.worst.rel_error || rep.checked == 1) {
          rep.worst = {param->name, i, analytic, numeric, rel, trial};
        }
      }
    }
  }
  set_warnings_enabled(true);
  return rep;
}

std::string gradcheck_report_json(const GradcheckReport &r) {
  nlohmann::ordered_json j;
  j["trials"] = r.trials;
  j["redrawn"] = r.redrawn;
  j["checked"] = r.checked;
  j["excluded"] = r.excluded;
  j["failures"] = r.failures;
  j["worst"] = {{"param", r.worst.param},
                {"index", r.worst.index},
                {"analytic", r.worst.analytic},
                {"numeric", r.worst.numeric},
                {"rel_error", r.worst.rel_error},
                {"trial", r.worst.trial}};
  j["passed"] = r.passed();
  return j.dump(2) + "\n";
}

}  // namespace duck
