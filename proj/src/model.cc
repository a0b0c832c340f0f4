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

#include "duck/model.h"

#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "duck/geometry.h"

namespace duck {

EncoderKind parse_encoder_kind(std::string_view tag) {
  if (tag == "table") return EncoderKind::kTable;
  if (tag == "hashed") return EncoderKind::kHashedBag;
  throw ConfigError("unknown encoder kind '" + std::string(tag) +
                    "' (expected table or hashed)");
}

std::string_view encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::kTable ? "table" : "hashed";
}

RelationEmbeddingKind parse_relation_embedding_kind(std::string_view tag) {
  if (tag == "random") return RelationEmbeddingKind::kRandom;
  if (tag == "text") return RelationEmbeddingKind::kHashedText;
  throw ConfigError("unknown relation embedding kind '" + std::string(tag) +
                    "' (expected random or text)");
}

std::string_view relation_embedding_kind_name(RelationEmbeddingKind kind) {
  return kind == RelationEmbeddingKind::kRandom ? "random" : "text";
}

void ModelConfig::validate() const {
  if (dim < 2) throw ConfigError("dim must be >= 2");
  for (const EncoderSpec *s : {&entity_encoder, &mention_encoder}) {
    if (s->kind == EncoderKind::kHashedBag && s->buckets == 0) {
      throw ConfigError("hashed encoders need at least one bucket");
    }
    if (s->max_tokens == 0) throw ConfigError("max tokens must be >= 1");
  }
  if (relation_embedding == RelationEmbeddingKind::kHashedText &&
      relation_buckets == 0) {
    throw ConfigError("relation_buckets must be >= 1");
  }
  if (!(delta_min >= 0.0 && delta_min < std::numbers::pi)) {
    throw ConfigError("delta_min must lie in [0, pi)");
  }
  if (!(delta_min_cartesian >= 0.0)) {
    throw ConfigError("delta_min_cartesian must be >= 0");
  }
}

std::string ModelConfig::serialize() const {
  std::ostringstream out;
  out << "dim=" << dim << "\n";
  out << "entity_encoder=" << encoder_kind_name(entity_encoder.kind) << "\n";
  out << "entity_buckets=" << entity_encoder.buckets << "\n";
  out << "max_entity_tokens=" << entity_encoder.max_tokens << "\n";
  out << "mention_encoder=" << encoder_kind_name(mention_encoder.kind) << "\n";
  out << "mention_buckets=" << mention_encoder.buckets << "\n";
  out << "max_mention_tokens=" << mention_encoder.max_tokens << "\n";
  out << "relation_embedding="
      << relation_embedding_kind_name(relation_embedding) << "\n";
  out << "relation_buckets=" << relation_buckets << "\n";
  out << "max_relation_tokens=" << relation_max_tokens << "\n";
  out << "mode=" << box_mode_name(box_mode) << "\n";
  out << "delta_min=" << format_double(delta_min) << "\n";
  out << "delta_min_cartesian=" << format_double(delta_min_cartesian) << "\n";
  out << "ffn_hidden=" << ffn_hidden << "\n";
  out << "seed=" << seed << "\n";
  return out.str();
}

bool ModelConfig::set(std::string_view key, const std::string &value) {
  if (key == "dim") {
    dim = parse_uint(value, key);
  } else if (key == "entity_encoder") {
    entity_encoder.kind = parse_encoder_kind(value);
  } else if (key == "entity_buckets") {
    entity_encoder.buckets = parse_uint(value, key);
  } else if (key == "max_entity_tokens") {
    entity_encoder.max_tokens = parse_uint(value, key);
  } else if (key == "mention_encoder") {
    mention_encoder.kind = parse_encoder_kind(value);
  } else if (key == "mention_buckets") {
    mention_encoder.buckets = parse_uint(value, key);
  } else if (key == "max_mention_tokens") {
    mention_encoder.max_tokens = parse_uint(value, key);
  } else if (key == "relation_embedding") {
    relation_embedding = parse_relation_embedding_kind(value);
  } else if (key == "relation_buckets") {
    relation_buckets = parse_uint(value, key);
  } else if (key == "max_relation_tokens") {
    relation_max_tokens = parse_uint(value, key);
  } else if (key == "mode") {
    box_mode = parse_box_mode(value);
  } else if (key == "delta_min") {
    delta_min = parse_double(value, key);
  } else if (key == "delta_min_cartesian") {
    delta_min_cartesian = parse_double(value, key);
  } else if (key == "ffn_hidden") {
    ffn_hidden = parse_uint(value, key);
  } else if (key == "seed") {
    seed = parse_uint(value, key);
  } else {
    return false;
  }
  return true;
}

ModelConfig ModelConfig::deserialize(const std::string &text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    if (!c.set(key, line.substr(eq + 1))) {
      throw ParseError("model config: unknown key '" + key + "'");
    }
  }
  return c;
}

Encoder::Encoder(const std::string &prefix, const EncoderSpec &spec,
                 size_t rows, size_t dim)
    : kind_(spec.kind), dim_(dim) {
  if (kind_ == EncoderKind::kTable) {
    table = Param(prefix + ".table", rows, dim);
  } else {
    projection = Param(prefix + ".projection", spec.buckets, dim);
    bias = Param(prefix + ".bias", 1, dim);
  }
}

void Encoder::init(Rng &rng) {
  double stddev = 1.0 / std::sqrt(static_cast<double>(dim_));
  if (kind_ == EncoderKind::kTable) {
    table.init_normal(rng, stddev);
  } else {
    projection.init_normal(rng, stddev);
  }
}

Vec Encoder::encode_raw(const EncoderInput &in) const {
  if (kind_ == EncoderKind::kTable) {
    if (in.row >= table.rows) {
      throw RangeError("encoder row " + std::to_string(in.row) +
                       " out of range (" + std::to_string(table.rows) + ")");
    }
    auto r = table.row(in.row);
    return Vec(r.begin(), r.end());
  }
  if (!in.features) throw RangeError("hashed encoder input has no features");
  Vec out(bias.value);
  for (auto [bucket, weight] : in.features->entries) {
    auto r = projection.row(bucket);
    for (size_t i = 0; i < dim_; ++i) out[i] += weight * r[i];
  }
  return out;
}

void Encoder::backward(const EncoderInput &in,
                       std::span<const double> grad_raw) {
  check_same_dim(grad_raw.size(), dim_, "encoder cotangent");
  if (kind_ == EncoderKind::kTable) {
    auto g = table.grad_row(in.row);
    for (size_t i = 0; i < dim_; ++i) g[i] += grad_raw[i];
    return;
  }
  for (size_t i = 0; i < dim_; ++i) bias.grad[i] += grad_raw[i];
  for (auto [bucket, weight] : in.features->entries) {
    auto g = projection.grad_row(bucket);
    for (size_t i = 0; i < dim_; ++i) g[i] += weight * grad_raw[i];
  }
}

void Encoder::visit_params(const std::function<void(Param &)> &fn) {
  if (kind_ == EncoderKind::kTable) {
    fn(table);
  } else {
    fn(projection);
    fn(bias);
  }
}

void Encoder::visit_params(
    const std::function<void(const Param &)> &fn) const {
  if (kind_ == EncoderKind::kTable) {
    fn(table);
  } else {
    fn(projection);
    fn(bias);
  }
}

Param build_relation_embeddings(const ModelConfig &config,
                                const KnowledgeGraph &g) {
  size_t n = g.num_relations();
  size_t d = config.dim;
  Param m("relation.embeddings", n, d);
  double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  for (size_t r = 0; r < n; ++r) {
    auto row = m.row(r);
    if (config.relation_embedding == RelationEmbeddingKind::kRandom) {
      Rng rng(derive_seed(config.seed, "relation", {r}));
      for (double &x : row) x = stddev * rng.normal();
      continue;
    }
    RelationText fallback{g.relations().name(static_cast<RelationIndex>(r)),
                          ""};
    const RelationText *text = g.relation_text(static_cast<RelationIndex>(r));
    auto tokens =
        relation_tokens(text ? *text : fallback, config.relation_max_tokens);
    SparseFeatures f = hash_bag(tokens, config.relation_buckets);
    for (auto [bucket, weight] : f.entries) {
      Rng rng(derive_seed(config.seed, "relation-bucket", {bucket}));
      for (double &x : row) x += weight * stddev * rng.normal();
    }
  }
  return m;
}

EmbeddingState EmbeddingState::create(
    const ModelConfig &config, const KnowledgeGraph &g,
    const std::vector<std::string> &mention_ids) {
  config.validate();
  EmbeddingState s;
  s.config_ = config;
  s.num_entities_ = g.num_entities();
  size_t d = config.dim;
  s.entity_ = Encoder("entity", config.entity_encoder, g.num_entities(), d);
  if (config.mention_encoder.kind == EncoderKind::kTable) {
    for (const auto &id : mention_ids) s.mention_rows_.intern(id);
  }
  s.mention_ = Encoder("mention", config.mention_encoder,
                       s.mention_rows_.size(), d);
  size_t hidden = config.ffn_hidden == 0 ? d : config.ffn_hidden;
  double delta = config.box_mode == BoxMode::kPolar
                     ? config.delta_min
                     : config.delta_min_cartesian;
  s.boxes_ = BoxParameterizer(config.box_mode, d, d, hidden, delta);
  s.relation_embeddings_ = build_relation_embeddings(config, g);
  s.build_entity_features(g);

  Rng entity_rng(derive_seed(config.seed, "init/entity"));
  s.entity_.init(entity_rng);
  Rng mention_rng(derive_seed(config.seed, "init/mention"));
  s.mention_.init(mention_rng);
  Rng box_rng(derive_seed(config.seed, "init/boxes"));
  s.boxes_.init(box_rng);
  return s;
}

void EmbeddingState::build_entity_features(const KnowledgeGraph &g) {
  entity_features_.clear();
  if (config_.entity_encoder.kind != EncoderKind::kHashedBag) return;
  entity_features_.resize(g.num_entities());
  for (size_t e = 0; e < g.num_entities(); ++e) {
    const EntityText *text = g.description(static_cast<EntityIndex>(e));
    EntityText fallback{g.entities().name(static_cast<EntityIndex>(e)), ""};
    entity_features_[e] =
        entity_features(text ? *text : fallback, config_.entity_encoder.buckets,
                        config_.entity_encoder.max_tokens);
  }
}

EncoderInput EmbeddingState::entity_input(EntityIndex e) const {
  if (e >= num_entities_) {
    throw RangeError("entity index " + std::to_string(e) + " out of range");
  }
  EncoderInput in;
  in.row = e;
  if (!entity_features_.empty()) in.features = &entity_features_[e];
  return in;
}

MentionInput EmbeddingState::prepare_mention(const MentionRecord &m) const {
  MentionInput in;
  in.gold = m.gold;
  if (config_.mention_encoder.kind == EncoderKind::kTable) {
    auto row = mention_rows_.find(m.id);
    if (!row) throw RangeError("unknown mention '" + m.id + "'");
    in.row = *row;
  } else {
    in.features = mention_features(m.text, config_.mention_encoder.buckets,
                                   config_.mention_encoder.max_tokens);
  }
  return in;
}

std::vector<MentionInput> EmbeddingState::prepare_mentions(
    const Dataset &ds) const {
  std::vector<MentionInput> out;
  out.reserve(ds.size());
  for (const auto &m : ds.mentions) out.push_back(prepare_mention(m));
  return out;
}

EncoderInput EmbeddingState::mention_input(const MentionInput &m) const {
  EncoderInput in;
  if (m.row) in.row = *m.row;
  in.features = &m.features;
  return in;
}

Vec EmbeddingState::encode_entity(EntityIndex e) const {
  return half_sphere_project(entity_.encode_raw(entity_input(e)));
}

Vec EmbeddingState::encode_mention(const MentionInput &m) const {
  return half_sphere_project(mention_.encode_raw(mention_input(m)));
}

std::vector<Vec> EmbeddingState::encode_all_entities(int threads) const {
  std::vector<Vec> out(num_entities_);
  parallel_for(num_entities_, threads, [&](size_t e) {
    out[e] = encode_entity(static_cast<EntityIndex>(e));
  });
  return out;
}

std::span<const double> EmbeddingState::relation_embedding(
    RelationIndex r) const {
  if (r >= relation_embeddings_.rows) {
    throw RangeError("relation index " + std::to_string(r) + " out of range");
  }
  return relation_embeddings_.row(r);
}

void EmbeddingState::zero_grads() {
  visit_params([](Param &p) { p.zero_grad(); });
}

void EmbeddingState::visit_params(const std::function<void(Param &)> &fn) {
  entity_.visit_params(fn);
  mention_.visit_params(fn);
  fn(boxes_.ffn_lower().w1);
  fn(boxes_.ffn_lower().b1);
  fn(boxes_.ffn_lower().w2);
  fn(boxes_.ffn_lower().b2);
  fn(boxes_.ffn_upper().w1);
  fn(boxes_.ffn_upper().b1);
  fn(boxes_.ffn_upper().w2);
  fn(boxes_.ffn_upper().b2);
}

void EmbeddingState::visit_params(
    const std::function<void(const Param &)> &fn) const {
  const_cast<EmbeddingState *>(this)->visit_params(
      [&](Param &p) { fn(static_cast<const Param &>(p)); });
}

size_t EmbeddingState::parameter_count() const {
  size_t n = 0;
  visit_params([&](const Param &p) { n += p.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// Binary serialization. Little-endian hosts only; doubles are stored as raw
// IEEE-754 bit patterns.

namespace {

constexpr char kStateMagic[8] = {'D', 'U', 'C', 'K', 'S', 'T', 'A', 'T'};
constexpr uint32_t kStateVersion = 1;

void put_u64(std::ostream &out, uint64_t x) {
  out.write(reinterpret_cast<const char *>(&x), sizeof(x));
}

uint64_t get_u64(std::istream &in) {
  uint64_t x = 0;
  in.read(reinterpret_cast<char *>(&x), sizeof(x));
  if (!in) throw ParseError("state: truncated input");
  return x;
}

void put_string(std::ostream &out, const std::string &s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream &in) {
  uint64_t n = get_u64(in);
  if (n > (uint64_t{1} << 32)) throw ParseError("state: corrupt string");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("state: truncated input");
  return s;
}

void put_doubles(std::ostream &out, const Vec &v) {
  put_u64(out, v.size());
  out.write(reinterpret_cast<const char *>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream &in, Vec &v) {
  uint64_t n = get_u64(in);
  if (n != v.size()) {
    throw ParseError("state: tensor size " + std::to_string(n) +
                     " does not match the configured shape (" +
                     std::to_string(v.size()) + ")");
  }
  in.read(reinterpret_cast<char *>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ParseError("state: truncated input");
}

void put_param(std::ostream &out, const Param &p) {
  put_string(out, p.name);
  put_u64(out, p.rows);
  put_u64(out, p.cols);
  put_doubles(out, p.value);
  put_doubles(out, p.moment1);
  put_doubles(out, p.moment2);
}

void get_param(std::istream &in, Param &p) {
  std::string name = get_string(in);
  uint64_t rows = get_u64(in);
  uint64_t cols = get_u64(in);
  if (name != p.name || rows != p.rows || cols != p.cols) {
    throw ParseError("state: parameter '" + name + "' does not match '" +
                     p.name + "'");
  }
  get_doubles(in, p.value);
  get_doubles(in, p.moment1);
  get_doubles(in, p.moment2);
}

}  // namespace

void EmbeddingState::write(std::ostream &out) const {
  out.write(kStateMagic, sizeof(kStateMagic));
  put_u64(out, kStateVersion);
  put_string(out, config_.serialize());
  put_u64(out, num_entities_);
  put_u64(out, mention_rows_.size());
  for (const auto &id : mention_rows_.names()) put_string(out, id);
  put_u64(out, step);
  size_t count = 0;
  visit_params([&](const Param &) { ++count; });
  put_u64(out, count);
  visit_params([&](const Param &p) { put_param(out, p); });
  put_param(out, relation_embeddings_);
}

EmbeddingState EmbeddingState::read(std::istream &in, const KnowledgeGraph &g) {
  char magic[sizeof(kStateMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0) {
    throw ParseError("state: bad magic");
  }
  uint64_t version = get_u64(in);
  if (version != kStateVersion) {
    throw ParseError("state: unsupported version " + std::to_string(version));
  }
  ModelConfig config = ModelConfig::deserialize(get_string(in));
  uint64_t entities = get_u64(in);
  if (entities != g.num_entities()) {
    throw ParseError("state: saved for " + std::to_string(entities) +
                     " entities, graph has " +
                     std::to_string(g.num_entities()));
  }
  std::vector<std::string> mention_ids(get_u64(in));
  for (auto &id : mention_ids) id = get_string(in);
  EmbeddingState s = create(config, g, mention_ids);
  s.step = get_u64(in);
  size_t count = 0;
  s.visit_params([&](const Param &) { ++count; });
  if (get_u64(in) != count) throw ParseError("state: parameter count mismatch");
  s.visit_params([&](Param &p) { get_param(in, p); });
  Param frozen = s.relation_embeddings_;
  get_param(in, s.relation_embeddings_);
  if (s.relation_embeddings_.value != frozen.value) {
    log_warning("state: stored relation embeddings differ from the rebuilt "
                "ones; using the stored matrix");
  }
  return s;
}

BoxSet materialize_boxes(const EmbeddingState &state,
                         std::vector<BoxParameterizer::Cache> *caches) {
  BoxSet set;
  set.mode = state.boxes().mode();
  size_t n = state.num_relations();
  set.lower.resize(n);
  set.upper.resize(n);
  if (caches) caches->assign(n, {});
  for (size_t r = 0; r < n; ++r) {
    state.boxes().corners(state.relation_embedding(static_cast<RelationIndex>(r)),
                          set.lower[r], set.upper[r],
                          caches ? &(*caches)[r] : nullptr);
  }
  return set;
}

double warmup_learning_rate(double lr_max, size_t warmup_steps, size_t step) {
  if (warmup_steps == 0 || step >= warmup_steps) return lr_max;
  return lr_max * static_cast<double>(step + 1) /
         static_cast<double>(warmup_steps);
}

double warmup_decay_learning_rate(double lr_max, size_t warmup_steps,
                                  size_t total_steps, size_t step) {
  if (step < warmup_steps || total_steps <= warmup_steps) {
    return warmup_learning_rate(lr_max, warmup_steps, step);
  }
  if (step >= total_steps) return 0.0;
  return lr_max * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup_steps);
}

double clip_gradients(EmbeddingState &state, double max_norm) {
  double sq = 0.0;
  state.visit_params([&](const Param &p) {
    for (double g : p.grad) sq += g * g;
  });
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    state.visit_params([&](Param &p) {
      for (double &g : p.grad) g *= scale;
    });
  }
  return norm;
}

void apply_gradients(EmbeddingState &state, const OptimizerConfig &opt,
                     double lr) {
  uint64_t t = state.step + 1;
  double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  state.visit_params([&](Param &p) {
    for (size_t i = 0; i < p.size(); ++i) {
      double g = p.grad[i];
      if (opt.kind == OptimizerKind::kSgd) {
        p.value[i] -= lr * g;
        continue;
      }
      p.moment1[i] = opt.beta1 * p.moment1[i] + (1.0 - opt.beta1) * g;
      p.moment2[i] = opt.beta2 * p.moment2[i] + (1.0 - opt.beta2) * g * g;
      double mhat = p.moment1[i] / c1;
      double vhat = p.moment2[i] / c2;
      p.value[i] -= lr * (mhat / (std::sqrt(vhat) + opt.epsilon) +
                          opt.weight_decay * p.value[i]);
    }
  });
  state.step = t;
}

uint64_t hash_values(std::span<const double> values) {
  return fnv1a(std::string_view(reinterpret_cast<const char *>(values.data()),
                                values.size() * sizeof(double)));
}

}  // namespace duck
