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

#include "duck/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace duck {

namespace {

template <class Row, class Key>
void rank_rows(std::vector<Row> &rows, size_t top_k, Key key) {
  auto less = [&](const Row &a, const Row &b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return key(a) < key(b);
  };
  size_t k = std::min(top_k, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + k, rows.end(), less);
  rows.resize(k);
}

std::string pad(const std::string &s, size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

template <class Row, class Name>
std::string table(const std::vector<Row> &rows, const char *header, Name name) {
  std::vector<std::string> names;
  size_t width = std::string(header).size();
  for (const auto &row : rows) {
    names.push_back(name(row));
    width = std::max(width, names.back().size());
  }
  std::ostringstream out;
  out << "rank  " << pad(header, width) << "  distance\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    std::string rank = std::to_string(i + 1);
    out << pad(rank, 4) << "  " << pad(names[i], width) << "  "
        << fixed(rows[i].distance) << "\n";
  }
  return out.str();
}

}  // namespace

EntityIndex disambiguate(std::span<const double> vm,
                         const std::vector<Vec> &entity_vecs,
                         std::span<const EntityIndex> candidates) {
  if (candidates.empty()) throw EmptyInputError("empty candidate list");
  EntityIndex best = 0;
  double best_score = 0.0;
  bool first = true;
  for (EntityIndex e : candidates) {
    if (e >= entity_vecs.size()) throw RangeError("candidate out of range");
    double s = dot(entity_vecs[e], vm);
    if (first || s > best_score || (s == best_score && e < best)) {
      best = e;
      best_score = s;
      first = false;
    }
  }
  return best;
}

EntityIndex disambiguate_all(std::span<const double> vm,
                             const std::vector<Vec> &entity_vecs) {
  std::vector<EntityIndex> all(entity_vecs.size());
  std::iota(all.begin(), all.end(), 0);
  return disambiguate(vm, entity_vecs, all);
}

double micro_f1_inkb(std::span<const EntityIndex> predictions,
                     std::span<const EntityIndex> golds) {
  check_same_dim(predictions.size(), golds.size(), "predictions vs golds");
  if (golds.empty()) throw EmptyInputError("no in-KB mentions to score");
  size_t correct = 0;
  for (size_t i = 0; i < golds.size(); ++i) correct += predictions[i] == golds[i];
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

EvalReport evaluate(const EmbeddingState &state, const Dataset &ds,
                    const CandidateSet *candidates, int threads) {
  if (ds.empty()) throw EmptyInputError("dataset has no mentions");
  return evaluate(state, ds, state.prepare_mentions(ds), candidates, threads);
}

EvalReport evaluate(const EmbeddingState &state, const Dataset &ds,
                    const std::vector<MentionInput> &inputs,
                    const CandidateSet *candidates, int threads) {
  if (ds.empty()) throw EmptyInputError("dataset has no mentions");
  check_same_dim(inputs.size(), ds.size(), "mention inputs");
  if (ds.in_kb() == 0) throw EmptyInputError("dataset has no in-KB mentions");
  std::vector<Vec> ents = state.encode_all_entities(threads);
  std::vector<EntityIndex> all(ents.size());
  std::iota(all.begin(), all.end(), 0);

  EvalReport report;
  report.predictions.resize(ds.size());
  std::vector<uint8_t> fallback(ds.size(), 0);
  parallel_for(ds.size(), threads, [&](size_t i) {
    const MentionRecord &m = ds.mentions[i];
    Prediction &p = report.predictions[i];
    p.mention_id = m.id;
    p.gold_name = m.gold_name;
    p.gold = m.gold;
    Vec vm = state.encode_mention(inputs[i]);
    std::span<const EntityIndex> pool = all;
    if (candidates) {
      auto it = candidates->find(m.id);
      if (it != candidates->end()) {
        pool = it->second;
      } else {
        fallback[i] = 1;
      }
    }
    p.predicted = disambiguate(vm, ents, pool);
    p.score = dot(ents[p.predicted], vm);
  });

  size_t missing = 0;
  std::vector<EntityIndex> preds, golds;
  for (size_t i = 0; i < ds.size(); ++i) {
    missing += fallback[i];
    const Prediction &p = report.predictions[i];
    if (!p.gold) {
      ++report.out_of_kb;
      continue;
    }
    preds.push_back(p.predicted);
    golds.push_back(*p.gold);
    report.correct += p.predicted == *p.gold;
    if (candidates && !fallback[i]) {
      const auto &list = candidates->at(p.mention_id);
      if (std::find(list.begin(), list.end(), *p.gold) == list.end()) {
        ++report.gold_missing;
      }
    }
  }
  if (missing > 0) {
    log_warning(std::to_string(missing) +
                " mentions have no candidate list; scored against all entities");
  }
  report.scored = golds.size();
  report.micro_f1 = micro_f1_inkb(preds, golds);
  return report;
}

void write_predictions(std::ostream &out, const EvalReport &report,
                       const KnowledgeGraph &g) {
  for (const auto &p : report.predictions) {
    out << p.mention_id << '\t' << g.entities().name(p.predicted) << '\t'
        << p.gold_name << '\t' << format_double(p.score) << '\n';
  }
}

std::string eval_report_json(const EvalReport &report) {
  nlohmann::ordered_json j;
  j["micro_f1"] = report.micro_f1;
  j["scored"] = report.scored;
  j["correct"] = report.correct;
  j["out_of_kb"] = report.out_of_kb;
  j["gold_missing_from_candidates"] = report.gold_missing;
  return j.dump(2) + "\n";
}

std::vector<Vec> entity_box_points(const EmbeddingState &state, int threads) {
  std::vector<Vec> vecs = state.encode_all_entities(threads);
  BoxMode mode = state.boxes().mode();
  parallel_for(vecs.size(), threads,
               [&](size_t e) { vecs[e] = box_point(mode, vecs[e]); });
  return vecs;
}

std::vector<RankedEntity> entities_nearest_box(const BoxSet &boxes,
                                               const std::vector<Vec> &points,
                                               RelationIndex r, size_t top_k) {
  if (r >= boxes.size()) throw RangeError("relation index out of range");
  std::vector<RankedEntity> rows;
  rows.reserve(points.size());
  for (size_t e = 0; e < points.size(); ++e) {
    rows.push_back({static_cast<EntityIndex>(e), boxes.distance(r, points[e])});
  }
  rank_rows(rows, top_k, [](const RankedEntity &x) { return x.entity; });
  return rows;
}

std::vector<RankedRelation> boxes_nearest_entity(const BoxSet &boxes,
                                                 std::span<const double> point,
                                                 size_t top_k) {
  std::vector<RankedRelation> rows;
  rows.reserve(boxes.size());
  for (size_t r = 0; r < boxes.size(); ++r) {
    auto rel = static_cast<RelationIndex>(r);
    rows.push_back({rel, boxes.distance(rel, point)});
  }
  rank_rows(rows, top_k, [](const RankedRelation &x) { return x.relation; });
  return rows;
}

ContainmentReport containment_report(const BoxSet &boxes,
                                     const KnowledgeGraph &g,
                                     const std::vector<Vec> &points,
                                     std::span<const EntityIndex> subset) {
  check_same_dim(points.size(), g.num_entities(), "entity points");
  std::vector<EntityIndex> all;
  if (subset.empty()) {
    all.resize(g.num_entities());
    std::iota(all.begin(), all.end(), 0);
    subset = all;
  }
  ContainmentReport rep;
  rep.per_relation.resize(boxes.size());
  for (size_t r = 0; r < boxes.size(); ++r) {
    rep.per_relation[r].relation = static_cast<RelationIndex>(r);
  }
  for (EntityIndex e : subset) {
    const RelationSet &rs = g.relation_set(e);
    for (size_t r = 0; r < boxes.size(); ++r) {
      auto rel = static_cast<RelationIndex>(r);
      bool in = boxes.contains(rel, points[e]);
      auto &row = rep.per_relation[r];
      if (rs.test(rel)) {
        ++row.positives;
        row.contained += in;
      } else {
        ++row.negatives;
        row.excluded += !in;
      }
    }
  }
  for (const auto &row : rep.per_relation) {
    rep.positive_pairs += row.positives;
    rep.contained += row.contained;
    rep.negative_pairs += row.negatives;
    rep.excluded += row.excluded;
  }
  if (rep.positive_pairs) {
    rep.positive_rate = static_cast<double>(rep.contained) /
                        static_cast<double>(rep.positive_pairs);
  }
  if (rep.negative_pairs) {
    rep.negative_exclusion = static_cast<double>(rep.excluded) /
                             static_cast<double>(rep.negative_pairs);
  }
  return rep;
}

std::vector<int> load_types(const std::string &path, const KnowledgeGraph &g,
                            std::vector<std::string> *type_names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open types file '" + path + "'");
  std::vector<int> types(g.num_entities(), -1);
  Vocabulary names;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto v = chomp(line);
    if (v.empty() || v.front() == '#') continue;
    auto fields = split_fields(v, '\t');
    if (fields.size() != 2) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected entity<TAB>type");
    }
    auto e = g.entities().find(fields[0]);
    if (!e) continue;
    types[*e] = static_cast<int>(names.intern(fields[1]));
  }
  if (type_names) *type_names = names.names();
  return types;
}

double type_purity_at_k(const std::vector<Vec> &vecs,
                        const std::vector<int> &types, size_t top_k,
                        int threads) {
  check_same_dim(vecs.size(), types.size(), "type labels");
  if (top_k == 0) throw RangeError("top_k must be >= 1");
  size_t n = vecs.size();
  Vec norms(n);
  for (size_t e = 0; e < n; ++e) norms[e] = std::max(norm2(vecs[e]), kNormEpsilon);
  Vec purity(n, -1.0);
  parallel_for(n, threads, [&](size_t e) {
    if (types[e] < 0) return;
    std::vector<std::pair<double, EntityIndex>> scored;
    for (size_t f = 0; f < n; ++f) {
      if (f == e || types[f] < 0) continue;
      double cosine = dot(vecs[e], vecs[f]) / (norms[e] * norms[f]);
      scored.emplace_back(-cosine, static_cast<EntityIndex>(f));
    }
    if (scored.empty()) return;
    size_t k = std::min(top_k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
    size_t same = 0;
    for (size_t i = 0; i < k; ++i) same += types[scored[i].second] == types[e];
    purity[e] = static_cast<double>(same) / static_cast<double>(k);
  });
  double sum = 0.0;
  size_t count = 0;
  for (double p : purity) {
    if (p < 0) continue;
    sum += p;
    ++count;
  }
  if (count == 0) throw EmptyInputError("no labeled entities");
  return sum / static_cast<double>(count);
}

double kg_type_purity_at_k(const KnowledgeGraph &g,
                           const std::vector<int> &types, size_t top_k,
                           int threads) {
  check_same_dim(g.num_entities(), types.size(), "type labels");
  double sum = 0.0;
  size_t count = 0;
  for (size_t e = 0; e < types.size(); ++e) {
    if (types[e] < 0) continue;
    auto nb = nearest_by_type(g, static_cast<EntityIndex>(e), top_k, threads);
    size_t same = 0, labeled = 0;
    for (const auto &n : nb) {
      if (types[n.entity] < 0) continue;
      ++labeled;
      same += types[n.entity] == types[e];
    }
    if (labeled == 0) continue;
    sum += static_cast<double>(same) / static_cast<double>(labeled);
    ++count;
  }
  if (count == 0) throw EmptyInputError("no labeled entities");
  return sum / static_cast<double>(count);
}

std::string format_entity_table(const std::vector<RankedEntity> &rows,
                                const KnowledgeGraph &g) {
  return table(rows, "entity",
               [&](const RankedEntity &r) { return g.entities().name(r.entity); });
}

std::string format_relation_table(const std::vector<RankedRelation> &rows,
                                  const KnowledgeGraph &g) {
  return table(rows, "relation", [&](const RankedRelation &r) {
    return g.relations().name(r.relation);
  });
}

std::string entity_ranking_json(const std::vector<RankedEntity> &rows,
                                const KnowledgeGraph &g) {
  auto j = nlohmann::ordered_json::array();
  for (const auto &r : rows) {
    j.push_back({{"entity", g.entities().name(r.entity)},
                 {"distance", r.distance}});
  }
  return j.dump(2) + "\n";
}

std::string relation_ranking_json(const std::vector<RankedRelation> &rows,
                                  const KnowledgeGraph &g) {
  auto j = nlohmann::ordered_json::array();
  for (const auto &r : rows) {
    j.push_back({{"relation", g.relations().name(r.relation)},
                 {"distance", r.distance}});
  }
  return j.dump(2) + "\n";
}

std::string dump_boxes_json(const BoxSet &boxes, const KnowledgeGraph &g) {
  auto arr = nlohmann::ordered_json::array();
  for (size_t r = 0; r < boxes.size(); ++r) {
    arr.push_back({{"relation", g.relations().name(static_cast<RelationIndex>(r))},
                   {"lower", boxes.lower[r]},
                   {"upper", boxes.upper[r]}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace duck
