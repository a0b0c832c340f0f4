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

#ifndef DUCK_MODEL_H_
#define DUCK_MODEL_H_

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duck/boxes.h"
#include "duck/common.h"
#include "duck/kg.h"
#include "duck/param.h"
#include "duck/text.h"

namespace duck {

enum class EncoderKind {
  kTable,      // one trainable row per item
  kHashedBag,  // hashed bag of tokens followed by a linear map
};

EncoderKind parse_encoder_kind(std::string_view tag);
std::string_view encoder_kind_name(EncoderKind kind);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kTable;
  size_t buckets = 4096;
  // Truncation length n_e / n_m.
  size_t max_tokens = 128;
  friend bool operator==(const EncoderSpec &, const EncoderSpec &) = default;
};

enum class RelationEmbeddingKind {
  kRandom,      // Gaussian row per relation, seeded by relation index
  kHashedText,  // mean of fixed random bucket vectors over the relation text
};

RelationEmbeddingKind parse_relation_embedding_kind(std::string_view tag);
std::string_view relation_embedding_kind_name(RelationEmbeddingKind kind);

struct ModelConfig {
  size_t dim = 32;
  EncoderSpec entity_encoder{EncoderKind::kTable, 4096, 128};
  EncoderSpec mention_encoder{EncoderKind::kHashedBag, 4096, 128};
  RelationEmbeddingKind relation_embedding = RelationEmbeddingKind::kRandom;
  size_t relation_buckets = 4096;
  size_t relation_max_tokens = 256;
  BoxMode box_mode = BoxMode::kPolar;
  double delta_min = 0.1;            // polar, radians
  double delta_min_cartesian = 0.1;  // cartesian, raw units
  size_t ffn_hidden = 0;             // 0 means dim
  uint64_t seed = 0;

  void validate() const;
  // key=value lines, the same keys the config file uses.
  std::string serialize() const;
  static ModelConfig deserialize(const std::string &text);
  // Applies one key; false when the key is not a model key.
  bool set(std::string_view key, const std::string &value);
  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

// Input to an encoder: a table row and/or hashed features.
struct EncoderInput {
  size_t row = 0;
  const SparseFeatures *features = nullptr;
};

class Encoder {
 public:
  Encoder() = default;
  // `rows` is the table size in table mode; ignored otherwise.
  Encoder(const std::string &prefix, const EncoderSpec &spec, size_t rows,
          size_t dim);

  EncoderKind kind() const { return kind_; }
  size_t dim() const { return dim_; }

  // Rows/weights Gaussian with std 1/sqrt(d); bias zero.
  void init(Rng &rng);

  // Encoder output before the half-sphere projection.
  Vec encode_raw(const EncoderInput &in) const;
  // Accumulates parameter gradients for a cotangent over encode_raw.
  void backward(const EncoderInput &in, std::span<const double> grad_raw);

  void visit_params(const std::function<void(Param &)> &fn);
  void visit_params(const std::function<void(const Param &)> &fn) const;

  Param table;
  Param projection;  // buckets x d
  Param bias;

 private:
  EncoderKind kind_ = EncoderKind::kTable;
  size_t dim_ = 0;
};

// Precomputed encoder input for one mention.
struct MentionInput {
  SparseFeatures features;
  std::optional<size_t> row;  // table mode only
  std::optional<EntityIndex> gold;
};

// All model parameters: entity and mention encoders and the box
// parameterizer (trainable), plus the frozen relation embeddings.
class EmbeddingState {
 public:
  EmbeddingState() = default;

  // `mention_ids` is the closed mention vocabulary used when the mention
  // encoder is a table; it is ignored otherwise.
  static EmbeddingState create(const ModelConfig &config,
                               const KnowledgeGraph &g,
                               const std::vector<std::string> &mention_ids = {});

  const ModelConfig &config() const { return config_; }
  size_t dim() const { return config_.dim; }
  size_t num_entities() const { return num_entities_; }
  size_t num_relations() const { return relation_embeddings_.rows; }

  EncoderInput entity_input(EntityIndex e) const;
  // Throws RangeError for an unknown mention in table mode.
  MentionInput prepare_mention(const MentionRecord &m) const;
  std::vector<MentionInput> prepare_mentions(const Dataset &ds) const;
  EncoderInput mention_input(const MentionInput &m) const;

  // Half-sphere projected encodings.
  Vec encode_entity(EntityIndex e) const;
  Vec encode_mention(const MentionInput &m) const;
  // All entities, row-major num_entities x d.
  std::vector<Vec> encode_all_entities(int threads = 1) const;

  std::span<const double> relation_embedding(RelationIndex r) const;
  const Param &relation_matrix() const { return relation_embeddings_; }

  Encoder &entity_encoder() { return entity_; }
  Encoder &mention_encoder() { return mention_; }
  BoxParameterizer &boxes() { return boxes_; }
  const Encoder &entity_encoder() const { return entity_; }
  const Encoder &mention_encoder() const { return mention_; }
  const BoxParameterizer &boxes() const { return boxes_; }

  void zero_grads();
  // Trainable parameters in a fixed order. The frozen relation matrix is
  // not visited.
  void visit_params(const std::function<void(Param &)> &fn);
  void visit_params(const std::function<void(const Param &)> &fn) const;
  size_t parameter_count() const;

  uint64_t step = 0;

  // Binary serialization; parameters, moments, relation matrix and step
  // round-trip bit-exactly. Gradients are not stored.
  void write(std::ostream &out) const;
  static EmbeddingState read(std::istream &in, const KnowledgeGraph &g);

 private:
  void build_entity_features(const KnowledgeGraph &g);

  ModelConfig config_;
  size_t num_entities_ = 0;
  Encoder entity_;
  Encoder mention_;
  BoxParameterizer boxes_;
  Param relation_embeddings_;
  std::vector<SparseFeatures> entity_features_;
  Vocabulary mention_rows_;
};

// Boxes of all relations under the current parameters. When `caches` is
// given it receives one parameterizer cache per relation for backward().
BoxSet materialize_boxes(const EmbeddingState &state,
                         std::vector<BoxParameterizer::Cache> *caches = nullptr);

// Frozen relation matrix for a graph (num_relations x dim).
Param build_relation_embeddings(const ModelConfig &config,
                                const KnowledgeGraph &g);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled, AdamW style
};

// Linear warmup from 0 to lr_max over warmup_steps, constant afterwards.
// `step` counts updates already taken, so the first update uses
// lr_max / warmup_steps.
double warmup_learning_rate(double lr_max, size_t warmup_steps, size_t step);
// Warmup followed by a linear decay that reaches zero at total_steps.
double warmup_decay_learning_rate(double lr_max, size_t warmup_steps,
                                  size_t total_steps, size_t step);

// Global L2 norm of all gradients; rescales them to max_norm when larger.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_gradients(EmbeddingState &state, double max_norm);

// One optimizer update with learning rate lr; increments state.step. The
// relation matrix is never touched.
void apply_gradients(EmbeddingState &state, const OptimizerConfig &opt,
                     double lr);

// FNV hash over the bytes of a parameter buffer.
uint64_t hash_values(std::span<const double> values);

}  // namespace duck

#endif  // DUCK_MODEL_H_
