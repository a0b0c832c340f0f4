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

#ifndef DUCK_KG_H_
#define DUCK_KG_H_

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "duck/common.h"

namespace duck {

// Fixed-width bit vector holding the set of relations on the outgoing edges
// of one entity. The population count is cached.
class RelationSet {
 public:
  RelationSet() = default;
  explicit RelationSet(size_t width);
  RelationSet(size_t width, std::initializer_list<RelationIndex> members);

  size_t width() const { return width_; }
  size_t cardinality() const { return count_; }
  bool empty() const { return count_ == 0; }

  void set(RelationIndex r);
  bool test(RelationIndex r) const;

  // Members in ascending order.
  std::vector<RelationIndex> members() const;

  std::span<const uint64_t> words() const { return words_; }

  friend bool operator==(const RelationSet &a, const RelationSet &b) {
    return a.width_ == b.width_ && a.words_ == b.words_;
  }

 private:
  size_t width_ = 0;
  size_t count_ = 0;
  std::vector<uint64_t> words_;
};

// |a △ b| as the Hamming distance of the two bit vectors.
size_t dist_kg(const RelationSet &a, const RelationSet &b);

// Ordered identifier table; indices follow first-insertion order.
class Vocabulary {
 public:
  uint32_t intern(std::string_view name);
  std::optional<uint32_t> find(std::string_view name) const;
  // Throws RangeError for unknown names.
  uint32_t at(std::string_view name) const;
  const std::string &name(uint32_t index) const;
  size_t size() const { return names_.size(); }
  const std::vector<std::string> &names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, uint32_t> index_;
};

struct Triple {
  EntityIndex head;
  RelationIndex relation;
  EntityIndex tail;
  auto operator<=>(const Triple &) const = default;
};

struct EntityText {
  std::string title;
  std::string body;
};

struct RelationText {
  std::string label;
  std::string description;
};

enum class TripleFormat {
  kTsv,         // head<TAB>relation<TAB>tail
  kWhitespace,  // head relation tail, any run of blanks as separator
};

TripleFormat parse_triple_format(std::string_view tag);

constexpr size_t kDefaultBitsetWidth = 1024;

// Bitset width used when none is configured: 1024, or the next power of two
// that fits the relation vocabulary.
size_t auto_bitset_width(size_t relation_count);

// Entity/relation vocabularies, deduplicated triples and optional texts.
// Immutable once built.
class KnowledgeGraph {
 public:
  const Vocabulary &entities() const { return entities_; }
  const Vocabulary &relations() const { return relations_; }
  const std::vector<Triple> &triples() const { return triples_; }
  size_t num_entities() const { return entities_.size(); }
  size_t num_relations() const { return relations_.size(); }
  size_t duplicate_triples() const { return duplicates_; }
  size_t bitset_width() const { return width_; }

  // R(e): relations on edges leaving e. Throws RangeError.
  const RelationSet &relation_set(EntityIndex e) const;

  const EntityText *description(EntityIndex e) const;
  const RelationText *relation_text(RelationIndex r) const;

 private:
  friend class GraphBuilder;
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  size_t duplicates_ = 0;
  size_t width_ = 0;
  std::vector<RelationSet> relation_sets_;
  std::unordered_map<EntityIndex, EntityText> descriptions_;
  std::unordered_map<RelationIndex, RelationText> relation_texts_;
};

class GraphBuilder {
 public:
  // width == 0 selects auto_bitset_width() at build time.
  explicit GraphBuilder(size_t bitset_width = 0) : width_(bitset_width) {}

  EntityIndex add_entity(std::string_view name);
  RelationIndex add_relation(std::string_view name);
  // Returns false when the triple was already present.
  bool add_triple(std::string_view head, std::string_view relation,
                  std::string_view tail);
  void set_description(std::string_view entity, EntityText text);
  void set_relation_text(std::string_view relation, RelationText text);

  // Throws ConfigError if the relations do not fit the bitset width.
  KnowledgeGraph build();

 private:
  struct TripleHash {
    size_t operator()(const Triple &t) const;
  };
  KnowledgeGraph graph_;
  size_t width_;
  std::unordered_map<Triple, bool, TripleHash> seen_;
};

struct GraphLoadOptions {
  size_t bitset_width = 0;
  std::string descriptions_path;    // entity<TAB>title<TAB>text
  std::string relation_texts_path;  // relation<TAB>label<TAB>description
};

KnowledgeGraph load_graph(const std::string &path,
                          TripleFormat format = TripleFormat::kTsv,
                          const GraphLoadOptions &options = {});

// Stream variants. `source` names the input in error messages.
void read_triples(std::istream &in, TripleFormat format, GraphBuilder &builder,
                  const std::string &source = "<stream>");
void read_descriptions(std::istream &in, GraphBuilder &builder,
                       const std::string &source = "<stream>");
void read_relation_texts(std::istream &in, GraphBuilder &builder,
                         const std::string &source = "<stream>");

struct Neighbor {
  EntityIndex entity;
  size_t distance;
  friend bool operator==(const Neighbor &, const Neighbor &) = default;
};

// The top_k entities other than e with the smallest dist_kg to e, by
// exhaustive search. Ties go to the smaller entity index.
std::vector<Neighbor> nearest_by_type(const KnowledgeGraph &g, EntityIndex e,
                                      size_t top_k, int threads = 1);

// Entities with |R(e)| >= min_relations, in index order.
std::vector<EntityIndex> filter_entities_by_min_relations(
    const KnowledgeGraph &g, size_t min_relations);

}  // namespace duck

#endif  // DUCK_KG_H_
