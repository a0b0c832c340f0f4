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

#ifndef DUCK_TOY_H_
#define DUCK_TOY_H_

#include <string>
#include <vector>

#include "duck/common.h"

namespace duck {

// Synthetic linking task. Every entity of a latent type holds all of that
// type's signature relations plus each shared relation with probability
// shared_prob. Surface names come in groups of `types` entities, one per
// type, and the candidate list of a mention is its surface group.
//
// Mention contexts mix filler words, words private to the entity and cue
// words of the entity's type. For a `cue_free_fraction` of the entities the
// training contexts carry no cue words, while their evaluation contexts
// carry cue words and no private words, so linking them depends on knowing
// their type.
struct ToyConfig {
  size_t types = 3;
  size_t entities_per_type = 60;
  size_t relations_per_type = 4;
  size_t shared_relations = 4;
  double shared_prob = 0.5;
  size_t train_mentions = 3;  // per entity
  size_t eval_mentions = 1;   // per entity, in each of val and test
  double cue_free_fraction = 0.5;
  size_t cue_vocab = 12;      // per type
  size_t filler_vocab = 150;
  size_t private_words = 3;   // per entity
  size_t cue_words = 2;       // per context
  size_t filler_words = 6;    // per context
  size_t private_per_context = 2;
  uint64_t seed = 0;

  void validate() const;
};

struct ToyFiles {
  std::string triples;
  std::string descriptions;
  std::string relations;
  std::string train;
  std::string val;
  std::string test;
  std::string candidates;
  std::string types;
};

// File contents; generation is a pure function of the config.
ToyFiles generate_toy(const ToyConfig &config);

// Writes the files into `dir` (created if missing) as triples.tsv,
// descriptions.tsv, relations.tsv, train.tsv, val.tsv, test.tsv,
// candidates.json and types.tsv.
void write_toy(const ToyConfig &config, const std::string &dir);

}  // namespace duck

#endif  // DUCK_TOY_H_
