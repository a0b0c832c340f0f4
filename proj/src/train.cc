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

#include "duck/train.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "duck/eval.h"
#include "json.hpp"

namespace duck {

namespace {

constexpr char kCheckpointMagic[8] = {'D', 'U', 'C', 'K', 'C', 'K', 'P', 'T'};
constexpr uint64_t kCheckpointVersion = 1;

void put_u64(std::ostream &out, uint64_t v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof(v));
}
void put_f64(std::ostream &out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(v));
  put_u64(out, bits);
}
void put_string(std::ostream &out, const std::string &s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint64_t get_u64(std::istream &in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (!in) throw ParseError("checkpoint: truncated");
  return v;
}
double get_f64(std::istream &in) {
  uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}
std::string get_string(std::istream &in) {
  uint64_t n = get_u64(in);
  if (n > (uint64_t{1} << 34)) throw ParseError("checkpoint: corrupt length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("checkpoint: truncated");
  return s;
}

std::string state_bytes(const EmbeddingState &s) {
  std::ostringstream out(std::ios::binary);
  s.write(out);
  return out.str();
}

EmbeddingState state_from(const std::string &blob, const KnowledgeGraph &g) {
  std::istringstream in(blob, std::ios::binary);
  return EmbeddingState::read(in, g);
}

double parameter_norm(const Param &p) { return std::sqrt(dot(p.value, p.value)); }

[[noreturn]] void numeric_abort(const EmbeddingState &state, const Batch &batch,
                                const std::vector<MentionInput> &mentions,
                                const BatchLoss &loss, size_t stage,
                                size_t step) {
  std::ostringstream msg;
  msg << "non-finite loss in stage " << stage + 1 << " at step " << step
      << " (l_ed=" << loss.l_ed << " l_duck_e=" << loss.l_duck_entity
      << " l_duck_m=" << loss.l_duck_mention << " l2=" << loss.l2_reg
      << "); batch mentions:";
  for (const auto &it : batch.items) {
    msg << ' ' << it.mention;
    if (mentions[it.mention].gold) msg << "->" << *mentions[it.mention].gold;
  }
  msg << "; parameter norms:";
  state.visit_params([&](const Param &p) {
    msg << ' ' << p.name << '=' << parameter_norm(p);
  });
  throw NumericError(msg.str());
}

struct StageContext {
  const TrainConfig &config;
  const KnowledgeGraph &g;
  const std::vector<MentionInput> &mentions;
  const HardNegatives *hard;
  const Validation *val;
  const TrainOptions *options;  // may be null
  EmbeddingState &state;
  Progress &progress;
  std::string &best_blob;
  double &best_f1;
  double &best_loss;
  std::vector<ReportRecord> records;
  std::function<void()> checkpoint;
};

double validation_f1(const StageContext &c) {
  return evaluate(c.state, *c.val->dataset, c.val->inputs, c.val->candidates,
                  c.config.threads)
      .micro_f1;
}

void emit_record(StageContext &c, bool stage_end) {
  Progress &p = c.progress;
  if (p.interval_batches == 0) return;
  double n = static_cast<double>(p.interval_batches);
  ReportRecord rec;
  rec.stage = p.stage + 1;
  rec.step = p.stage_steps;
  rec.l_ed = p.sum_ed / n;
  rec.l_duck_entity = p.sum_de / n;
  rec.l_duck_mention = p.sum_dm / n;
  rec.l2 = p.sum_l2 / n;
  rec.total = p.sum_total / n;
  rec.containment_rate = containment_rate(c.state, c.g, c.config.threads);
  bool validate = stage_end || c.config.val_every == 0 ||
                  p.stage_steps % c.config.val_every == 0;
  if (c.val && c.val->dataset && validate) {
    rec.val_f1 = validation_f1(c);
    if (*rec.val_f1 > c.best_f1 ||
        (*rec.val_f1 == c.best_f1 && rec.total < c.best_loss)) {
      c.best_f1 = *rec.val_f1;
      c.best_loss = rec.total;
      c.best_blob = state_bytes(c.state);
    }
  }
  p.interval_batches = 0;
  p.sum_ed = p.sum_de = p.sum_dm = p.sum_l2 = p.sum_total = 0.0;
  if (c.options && c.options->report) {
    *c.options->report << rec.to_json() << '\n';
    c.options->report->flush();
  }
  c.records.push_back(rec);
}

// Returns false when interrupted by options->stop_after_steps.
bool run_stage_from(StageContext &c) {
  const size_t s = c.progress.stage;
  const StageConfig &stage = c.config.stages.at(s);
  const LossWeights w = c.config.stage_weights(s);
  const uint64_t seed = c.config.seed;
  Progress &p = c.progress;
  const HardNegatives *hard = stage.hard_negatives > 0 ? c.hard : nullptr;
  size_t micro = 0;

  size_t in_kb = 0;
  for (const auto &m : c.mentions) in_kb += m.gold.has_value();
  size_t batches_per_epoch = (in_kb + stage.batch_size - 1) / stage.batch_size;
  size_t steps_per_epoch =
      (batches_per_epoch + stage.grad_accum - 1) / stage.grad_accum;
  size_t planned = steps_per_epoch * stage.epochs;
  if (stage.max_steps > 0) planned = std::min(planned, stage.max_steps);

  auto step_limit_hit = [&] {
    return stage.max_steps > 0 && p.stage_steps >= stage.max_steps;
  };

  while (p.epoch < stage.epochs && !step_limit_hit()) {
    Rng shuffle(derive_seed(seed, "shuffle", {s, p.epoch}));
    std::vector<Batch> batches =
        build_batches(c.mentions, c.g, stage, hard, shuffle);
    if (batches.empty()) throw EmptyInputError("no in-KB training mentions");
    for (; p.batch < batches.size(); ++p.batch) {
      Batch &batch = batches[p.batch];
      Rng neg(derive_seed(seed, "negatives", {s, p.epoch, p.batch}));
      sample_batch_negatives(c.state, c.g, c.mentions, batch, w, neg);
      if (micro == 0) c.state.zero_grads();
      BatchLoss loss = loss_total(c.state, c.g, c.mentions, batch, w, true,
                                  c.config.threads);
      if (!std::isfinite(loss.total)) {
        numeric_abort(c.state, batch, c.mentions, loss, s, p.stage_steps);
      }
      p.sum_ed += loss.l_ed;
      p.sum_de += loss.l_duck_entity;
      p.sum_dm += loss.l_duck_mention;
      p.sum_l2 += loss.l2_reg;
      p.sum_total += loss.total;
      ++p.interval_batches;
      ++micro;
      bool last = p.batch + 1 == batches.size();
      if (micro < stage.grad_accum && !last) continue;

      if (micro > 1) {
        double scale = 1.0 / static_cast<double>(micro);
        c.state.visit_params([&](Param &param) {
          for (double &x : param.grad) x *= scale;
        });
      }
      micro = 0;
      if (c.config.clip_norm > 0.0) {
        double norm = clip_gradients(c.state, c.config.clip_norm);
        if (!std::isfinite(norm)) {
          numeric_abort(c.state, batch, c.mentions, loss, s, p.stage_steps);
        }
      }
      double lr =
          stage.linear_decay
              ? warmup_decay_learning_rate(stage.lr_max, stage.warmup, planned,
                                           p.stage_steps)
              : warmup_learning_rate(stage.lr_max, stage.warmup, p.stage_steps);
      apply_gradients(c.state, c.config.optimizer, lr);
      ++p.stage_steps;

      if (p.stage_steps % c.config.log_every == 0) emit_record(c, false);
      if (step_limit_hit()) {
        ++p.batch;
        break;
      }
      bool stop = c.options && c.options->stop_after_steps &&
                  c.state.step >= *c.options->stop_after_steps;
      bool cadence = c.config.checkpoint_every > 0 &&
                     p.stage_steps % c.config.checkpoint_every == 0;
      if (stop || cadence) {
        ++p.batch;
        if (p.batch == batches.size()) {
          p.batch = 0;
          ++p.epoch;
        }
        if (c.checkpoint) c.checkpoint();
        if (stop) return false;
        if (p.batch == 0) break;
        --p.batch;
      }
    }
    if (p.batch >= batches.size() || step_limit_hit()) {
      p.batch = 0;
      ++p.epoch;
    }
  }
  emit_record(c, true);
  if (c.val && c.val->dataset && !c.best_blob.empty()) {
    double f1 = validation_f1(c);
    if (f1 < c.best_f1) {
      uint64_t step = c.state.step;
      c.state = state_from(c.best_blob, c.g);
      c.state.step = step;
    }
  }
  return true;
}

}  // namespace

std::vector<Batch> build_batches(const std::vector<MentionInput> &mentions,
                                 const KnowledgeGraph &g,
                                 const StageConfig &stage,
                                 const HardNegatives *hard, Rng &rng) {
  if (stage.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (hard && hard->size() != mentions.size()) {
    throw DimensionError("hard negatives do not match the mention list");
  }
  std::vector<size_t> order;
  for (size_t i = 0; i < mentions.size(); ++i) {
    if (mentions[i].gold) order.push_back(i);
  }
  rng.shuffle(order);
  size_t min_rel = std::max<size_t>(1, stage.min_relations);
  size_t cap = std::max<size_t>(1, stage.max_entities);

  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += stage.batch_size) {
    size_t end = std::min(order.size(), start + stage.batch_size);
    Batch b;
    for (size_t i = start; i < end; ++i) {
      BatchItem item;
      item.mention = order[i];
      item.gold = *mentions[order[i]].gold;
      item.pool.push_back(item.gold);
      auto add = [&](EntityIndex e) {
        if (item.pool.size() >= cap) return;
        if (std::find(item.pool.begin(), item.pool.end(), e) != item.pool.end()) {
          return;
        }
        item.pool.push_back(e);
      };
      if (hard) {
        const auto &list = (*hard)[item.mention];
        size_t n = std::min(list.size(), stage.hard_negatives);
        for (size_t k = 0; k < n; ++k) add(list[k]);
      }
      if (stage.in_batch_negatives) {
        for (size_t j = start; j < end; ++j) {
          if (j != i) add(*mentions[order[j]].gold);
        }
      }
      item.typed = g.relation_set(item.gold).cardinality() >= min_rel;
      b.items.push_back(std::move(item));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

HardNegatives mine_hard_negatives(const EmbeddingState &state,
                                  const std::vector<MentionInput> &mentions,
                                  size_t top_k, int threads) {
  std::vector<Vec> ents = state.encode_all_entities(threads);
  HardNegatives out(mentions.size());
  parallel_for(mentions.size(), threads, [&](size_t i) {
    if (!mentions[i].gold || top_k == 0) return;
    EntityIndex gold = *mentions[i].gold;
    Vec vm = state.encode_mention(mentions[i]);
    std::vector<std::pair<double, EntityIndex>> scored;
    scored.reserve(ents.size());
    for (size_t e = 0; e < ents.size(); ++e) {
      if (e == gold) continue;
      scored.emplace_back(-dot(ents[e], vm), static_cast<EntityIndex>(e));
    }
    size_t k = std::min(top_k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
    for (size_t j = 0; j < k; ++j) out[i].push_back(scored[j].second);
  });
  return out;
}

std::string ReportRecord::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["step"] = step;
  j["l_ed"] = l_ed;
  j["l_duck_e"] = l_duck_entity;
  j["l_duck_m"] = l_duck_mention;
  j["l2"] = l2;
  j["total"] = total;
  j["containment_rate"] = containment_rate;
  if (val_f1) j["val_f1"] = *val_f1;
  return j.dump();
}

void Checkpoint::write(std::ostream &out) const {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, kCheckpointVersion);
  put_string(out, config_text);
  const Progress &p = progress;
  put_u64(out, p.stage);
  put_u64(out, p.epoch);
  put_u64(out, p.batch);
  put_u64(out, p.stage_steps);
  put_u64(out, p.finished ? 1 : 0);
  put_u64(out, p.interval_batches);
  for (double v : {p.sum_ed, p.sum_de, p.sum_dm, p.sum_l2, p.sum_total}) {
    put_f64(out, v);
  }
  put_u64(out, hard.size());
  for (const auto &list : hard) {
    put_u64(out, list.size());
    for (EntityIndex e : list) put_u64(out, e);
  }
  put_string(out, state_blob);
  put_string(out, best_blob);
  put_f64(out, best_f1);
  put_f64(out, best_loss);
  if (!out) throw IoError("checkpoint write failed");
}

Checkpoint Checkpoint::read(std::istream &in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("checkpoint: bad magic");
  }
  if (get_u64(in) != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version");
  }
  Checkpoint c;
  c.config_text = get_string(in);
  Progress &p = c.progress;
  p.stage = get_u64(in);
  p.epoch = get_u64(in);
  p.batch = get_u64(in);
  p.stage_steps = get_u64(in);
  p.finished = get_u64(in) != 0;
  p.interval_batches = get_u64(in);
  for (double *v : {&p.sum_ed, &p.sum_de, &p.sum_dm, &p.sum_l2, &p.sum_total}) {
    *v = get_f64(in);
  }
  c.hard.resize(get_u64(in));
  for (auto &list : c.hard) {
    list.resize(get_u64(in));
    for (auto &e : list) e = static_cast<EntityIndex>(get_u64(in));
  }
  c.state_blob = get_string(in);
  c.best_blob = get_string(in);
  c.best_f1 = get_f64(in);
  c.best_loss = get_f64(in);
  return c;
}

void Checkpoint::save(const std::string &path) const {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    write(out);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint Checkpoint::load(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return read(in);
}

double containment_rate(const EmbeddingState &state, const KnowledgeGraph &g,
                        int threads) {
  std::vector<EntityIndex> subset;
  for (size_t e = 0; e < g.num_entities(); ++e) {
    if (g.relation_set(static_cast<EntityIndex>(e)).cardinality() > 0) {
      subset.push_back(static_cast<EntityIndex>(e));
    }
  }
  if (subset.empty()) return 0.0;
  BoxSet boxes = materialize_boxes(state);
  return containment_report(boxes, g, entity_box_points(state, threads), subset)
      .positive_rate;
}

std::vector<ReportRecord> run_stage(EmbeddingState &state,
                                    const TrainConfig &config, size_t stage,
                                    const KnowledgeGraph &g,
                                    const std::vector<MentionInput> &mentions,
                                    const HardNegatives *hard,
                                    const Validation *val) {
  config.validate();
  if (stage >= config.stages.size()) throw RangeError("stage out of range");
  Progress progress;
  progress.stage = stage;
  std::string best_blob;
  double best_f1 = -1.0, best_loss = 0.0;
  StageContext c{config, g,        mentions,  hard,    val,      nullptr,
                 state,  progress, best_blob, best_f1, best_loss, {},      {}};
  run_stage_from(c);
  return c.records;
}

TrainResult run_training(const TrainConfig &config, const KnowledgeGraph &g,
                         const Dataset &train, const Validation *val,
                         const TrainOptions &options) {
  config.validate();
  if (train.empty()) throw EmptyInputError("training set has no mentions");
  if (train.in_kb() == 0) throw EmptyInputError("training set has no in-KB mentions");

  std::vector<std::string> ids;
  for (const auto &m : train.mentions) ids.push_back(m.id);
  TrainResult result;
  Progress progress;
  HardNegatives hard;
  std::string best_blob;
  double best_f1 = -1.0, best_loss = 0.0;
  std::string config_text = config.serialize();

  if (options.resume) {
    const Checkpoint &ck = *options.resume;
    if (ck.config_text != config_text) {
      throw ConfigError("checkpoint was written with a different config");
    }
    result.state = state_from(ck.state_blob, g);
    progress = ck.progress;
    hard = ck.hard;
    best_blob = ck.best_blob;
    best_f1 = ck.best_f1;
    best_loss = ck.best_loss;
  } else {
    result.state = EmbeddingState::create(config.model, g, ids);
  }
  std::vector<MentionInput> mentions = result.state.prepare_mentions(train);

  auto save = [&] {
    if (options.checkpoint_path.empty()) return;
    Checkpoint ck;
    ck.config_text = config_text;
    ck.progress = progress;
    ck.hard = hard;
    ck.state_blob = state_bytes(result.state);
    ck.best_blob = best_blob;
    ck.best_f1 = best_f1;
    ck.best_loss = best_loss;
    ck.save(options.checkpoint_path);
  };

  if (!options.resume && config.stages[0].hard_negatives > 0) {
    hard = mine_hard_negatives(result.state, mentions,
                               config.stages[0].hard_negatives, config.threads);
  }

  while (!progress.finished) {
    StageContext c{config,       g,        mentions,  &hard,   val,
                   &options,     result.state, progress, best_blob, best_f1,
                   best_loss,    {},       save};
    bool done = run_stage_from(c);
    result.records.insert(result.records.end(), c.records.begin(),
                          c.records.end());
    if (!done) {
      result.interrupted = true;
      return result;
    }
    size_t next = progress.stage + 1;
    progress = Progress{};
    best_blob.clear();
    best_f1 = -1.0;
    best_loss = 0.0;
    if (next >= config.stages.size()) {
      progress.stage = config.stages.size() - 1;
      progress.finished = true;
    } else {
      progress.stage = next;
      if (config.stages[next].hard_negatives > 0) {
        hard = mine_hard_negatives(result.state, mentions,
                                   config.stages[next].hard_negatives,
                                   config.threads);
      }
    }
    save();
  }
  return result;
}

}  // namespace duck
