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

#ifndef DUCK_TRAIN_H_
#define DUCK_TRAIN_H_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "duck/config.h"
#include "duck/kg.h"
#include "duck/model.h"
#include "duck/objective.h"
#include "duck/text.h"

namespace duck {

// Per-mention hard-negative lists, indexed like the mention inputs.
using HardNegatives = std::vector<std::vector<EntityIndex>>;

// Shuffles the in-KB mentions and cuts them into batches. A mention's pool is
// its gold, then its hard negatives, then (with in-batch negatives) the other
// golds of the batch, deduplicated and capped at stage.max_entities. Typing
// terms apply to mentions whose gold has at least max(1, min_relations)
// relations.
std::vector<Batch> build_batches(const std::vector<MentionInput> &mentions,
                                 const KnowledgeGraph &g,
                                 const StageConfig &stage,
                                 const HardNegatives *hard, Rng &rng);

// For every mention with a gold entity, the top_k other entities by s(e, m),
// ties to the lower index. Mentions without a gold get an empty list.
HardNegatives mine_hard_negatives(const EmbeddingState &state,
                                  const std::vector<MentionInput> &mentions,
                                  size_t top_k, int threads = 1);

struct ReportRecord {
  size_t stage = 0;  // from 1
  size_t step = 0;   // optimizer steps within the stage
  double l_ed = 0.0;
  double l_duck_entity = 0.0;
  double l_duck_mention = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double containment_rate = 0.0;
  std::optional<double> val_f1;

  std::string to_json() const;
};

// Validation inputs for model selection.
struct Validation {
  const Dataset *dataset = nullptr;
  std::vector<MentionInput> inputs;
  const CandidateSet *candidates = nullptr;
};

// Where a run stands; checkpoints store it so a resumed run continues with
// the same batches and random streams.
struct Progress {
  size_t stage = 0;
  size_t epoch = 0;
  size_t batch = 0;         // next batch within the epoch
  size_t stage_steps = 0;   // optimizer steps taken in this stage
  bool finished = false;
  // Interval accumulators for the next report record.
  size_t interval_batches = 0;
  double sum_ed = 0.0, sum_de = 0.0, sum_dm = 0.0, sum_l2 = 0.0, sum_total = 0.0;
};

struct Checkpoint {
  std::string config_text;
  Progress progress;
  HardNegatives hard;
  std::string state_blob;
  // Best validation snapshot of the current stage, if any.
  std::string best_blob;
  double best_f1 = -1.0;
  double best_loss = 0.0;

  void write(std::ostream &out) const;
  static Checkpoint read(std::istream &in);
  void save(const std::string &path) const;
  static Checkpoint load(const std::string &path);
};

struct TrainOptions {
  std::ostream *report = nullptr;     // JSON lines
  std::string checkpoint_path;        // empty: no checkpoints
  const Checkpoint *resume = nullptr; // continue from here
  // Stop after this many optimizer steps in total (for interruption tests).
  std::optional<size_t> stop_after_steps;
};

struct TrainResult {
  EmbeddingState state;
  std::vector<ReportRecord> records;
  bool interrupted = false;
};

// Runs every stage in order, mining hard negatives before stages that use
// them. Throws NumericError with a diagnostic when a loss goes non-finite.
TrainResult run_training(const TrainConfig &config, const KnowledgeGraph &g,
                         const Dataset &train, const Validation *val,
                         const TrainOptions &options = {});

// One stage on an existing state. `stage` indexes config.stages.
std::vector<ReportRecord> run_stage(EmbeddingState &state,
                                    const TrainConfig &config, size_t stage,
                                    const KnowledgeGraph &g,
                                    const std::vector<MentionInput> &mentions,
                                    const HardNegatives *hard,
                                    const Validation *val);

// Share of (entity, r+) pairs over entities with a non-empty relation set
// whose point lies in Box(r+).
double containment_rate(const EmbeddingState &state, const KnowledgeGraph &g,
                        int threads = 1);

}  // namespace duck

#endif  // DUCK_TRAIN_H_
