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

#ifndef DUCK_CONFIG_H_
#define DUCK_CONFIG_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "duck/model.h"
#include "duck/objective.h"

namespace duck {

struct StageConfig {
  size_t epochs = 1;
  size_t max_steps = 0;  // optimizer steps; 0 means no cap
  size_t batch_size = 16;
  size_t max_entities = 32;
  double alpha = 0.1;
  size_t min_relations = 0;
  size_t hard_negatives = 0;
  bool in_batch_negatives = true;
  double lr_max = 1e-2;
  size_t warmup = 100;
  size_t grad_accum = 1;
  // Linear decay of the learning rate to zero over the stage's planned steps
  // after warmup.
  bool linear_decay = false;
  // Per-stage overrides of the global loss weights.
  std::optional<double> gamma;
  std::optional<double> lambda_duck;
  std::optional<double> lambda_l2;
  std::optional<size_t> k_negatives;

  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LossWeights loss;
  OptimizerConfig optimizer;
  std::vector<StageConfig> stages{StageConfig{}};
  uint64_t seed = 0;
  size_t bitset_width = 0;  // 0 picks the default width
  double clip_norm = 1.0;   // 0 disables clipping
  size_t log_every = 200;   // optimizer steps between report records
  size_t checkpoint_every = 0;  // optimizer steps; 0 checkpoints per stage
  size_t val_every = 0;         // 0 validates at each log record
  bool no_types = false;        // forces lambda_duck = 0
  int threads = 1;

  void validate() const;
  // Loss weights in force during `stage`.
  LossWeights stage_weights(size_t stage) const;

  // Applies one key. Stage keys look like `stage.<n>.<field>` with n from 1
  // and grow the stage list as needed. Throws ConfigError for unknown keys.
  void set(std::string_view key, const std::string &value);

  // key=value lines; '#' starts a comment.
  static TrainConfig parse_text(const std::string &text);
  // JSON object; nested objects flatten to dotted keys and a "stages" array
  // maps to stage.<n>.
  static TrainConfig parse_json(const std::string &text);
  // Dispatches on the first non-blank character.
  static TrainConfig parse(const std::string &text);
  static TrainConfig load(const std::string &path);

  // Canonical key=value form; parse_text(serialize()) reproduces the config.
  std::string serialize() const;
};

}  // namespace duck

#endif  // DUCK_CONFIG_H_
