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

#ifndef DUCK_EVAL_H_
#define DUCK_EVAL_H_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duck/boxes.h"
#include "duck/kg.h"
#include "duck/model.h"
#include "duck/text.h"

namespace duck {

// argmax over `candidates` of entity_vecs[e] . vm, ties to the lower index.
// Throws EmptyInputError for an empty candidate list.
EntityIndex disambiguate(std::span<const double> vm,
                         const std::vector<Vec> &entity_vecs,
                         std::span<const EntityIndex> candidates);
// Same over every entity.
EntityIndex disambiguate_all(std::span<const double> vm,
                             const std::vector<Vec> &entity_vecs);

// correct / total over aligned lists. Throws DimensionError on a length
// mismatch and EmptyInputError when both are empty.
double micro_f1_inkb(std::span<const EntityIndex> predictions,
                     std::span<const EntityIndex> golds);

struct Prediction {
  std::string mention_id;
  std::string gold_name;
  std::optional<EntityIndex> gold;
  EntityIndex predicted = 0;
  double score = 0.0;
};

struct EvalReport {
  double micro_f1 = 0.0;
  size_t scored = 0;       // in-KB mentions
  size_t correct = 0;
  size_t out_of_kb = 0;    // excluded from scoring
  size_t gold_missing = 0; // gold absent from the candidate list
  std::vector<Prediction> predictions;
};

// Candidate mode when `candidates` is set, ALL mode otherwise. Mentions
// missing from the candidate file fall back to ALL mode with a warning.
// Throws EmptyInputError for an empty dataset or one with no in-KB mention.
EvalReport evaluate(const EmbeddingState &state, const Dataset &ds,
                    const CandidateSet *candidates, int threads = 1);
EvalReport evaluate(const EmbeddingState &state, const Dataset &ds,
                    const std::vector<MentionInput> &inputs,
                    const CandidateSet *candidates, int threads = 1);

void write_predictions(std::ostream &out, const EvalReport &report,
                       const KnowledgeGraph &g);
std::string eval_report_json(const EvalReport &report);

struct RankedEntity {
  EntityIndex entity;
  double distance;
};
struct RankedRelation {
  RelationIndex relation;
  double distance;
};

// Box-space coordinates of every entity.
std::vector<Vec> entity_box_points(const EmbeddingState &state,
                                   int threads = 1);

// Entities by ascending distance to Box(r), ties to the lower index.
std::vector<RankedEntity> entities_nearest_box(const BoxSet &boxes,
                                               const std::vector<Vec> &points,
                                               RelationIndex r, size_t top_k);
// Relations by ascending distance from `point`, ties to the lower index.
std::vector<RankedRelation> boxes_nearest_entity(const BoxSet &boxes,
                                                 std::span<const double> point,
                                                 size_t top_k);

struct RelationContainment {
  RelationIndex relation = 0;
  size_t positives = 0;
  size_t contained = 0;
  size_t negatives = 0;
  size_t excluded = 0;
};

struct ContainmentReport {
  size_t positive_pairs = 0;
  size_t contained = 0;
  size_t negative_pairs = 0;
  size_t excluded = 0;
  double positive_rate = 0.0;       // contained / positive_pairs
  double negative_exclusion = 0.0;  // excluded / negative_pairs
  std::vector<RelationContainment> per_relation;
};

// Over `subset` (all entities when empty).
ContainmentReport containment_report(const BoxSet &boxes,
                                     const KnowledgeGraph &g,
                                     const std::vector<Vec> &points,
                                     std::span<const EntityIndex> subset = {});

// Type labels per entity; -1 for entities absent from the file.
std::vector<int> load_types(const std::string &path, const KnowledgeGraph &g,
                            std::vector<std::string> *type_names = nullptr);

// Mean over labeled entities of the fraction of their top_k neighbours
// (largest cosine similarity, ties to the lower index, self excluded,
// unlabeled skipped) that share their label.
double type_purity_at_k(const std::vector<Vec> &vecs,
                        const std::vector<int> &types, size_t top_k,
                        int threads = 1);
// The same with neighbours from nearest_by_type.
double kg_type_purity_at_k(const KnowledgeGraph &g,
                           const std::vector<int> &types, size_t top_k,
                           int threads = 1);

// Aligned text table and JSON for query results.
std::string format_entity_table(const std::vector<RankedEntity> &rows,
                                const KnowledgeGraph &g);
std::string format_relation_table(const std::vector<RankedRelation> &rows,
                                  const KnowledgeGraph &g);
std::string entity_ranking_json(const std::vector<RankedEntity> &rows,
                                const KnowledgeGraph &g);
std::string relation_ranking_json(const std::vector<RankedRelation> &rows,
                                  const KnowledgeGraph &g);

// Every relation's box corners as JSON.
std::string dump_boxes_json(const BoxSet &boxes, const KnowledgeGraph &g);

}  // namespace duck

#endif  // DUCK_EVAL_H_
