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

#include "duck/kg.h"

#include <algorithm>
#include <bit>
#include <fstream>

namespace duck {

RelationSet::RelationSet(size_t width)
    : width_(width), words_((width + 63) / 64, 0) {}

RelationSet::RelationSet(size_t width,
                         std::initializer_list<RelationIndex> members)
    : RelationSet(width) {
  for (RelationIndex r : members) set(r);
}

void RelationSet::set(RelationIndex r) {
  if (r >= width_) {
    throw RangeError("relation index " + std::to_string(r) +
                     " exceeds bitset width " + std::to_string(width_));
  }
  uint64_t bit = uint64_t{1} << (r % 64);
  uint64_t &word = words_[r / 64];
  if (!(word & bit)) {
    word |= bit;
    ++count_;
  }
}

bool RelationSet::test(RelationIndex r) const {
  if (r >= width_) return false;
  return (words_[r / 64] >> (r % 64)) & 1;
}

std::vector<RelationIndex> RelationSet::members() const {
  std::vector<RelationIndex> out;
  out.reserve(count_);
  for (size_t w = 0; w < words_.size(); ++w) {
    uint64_t word = words_[w];
    while (word) {
      int bit = std::countr_zero(word);
      out.push_back(static_cast<RelationIndex>(w * 64 + bit));
      word &= word - 1;
    }
  }
  return out;
}

size_t dist_kg(const RelationSet &a, const RelationSet &b) {
  check_same_dim(a.width(), b.width(), "dist_kg");
  size_t d = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (size_t i = 0; i < wa.size(); ++i) d += std::popcount(wa[i] ^ wb[i]);
  return d;
}

uint32_t Vocabulary::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  auto id = static_cast<uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

uint32_t Vocabulary::at(std::string_view name) const {
  auto id = find(name);
  if (!id) throw RangeError("unknown identifier '" + std::string(name) + "'");
  return *id;
}

const std::string &Vocabulary::name(uint32_t index) const {
  if (index >= names_.size()) {
    throw RangeError("index " + std::to_string(index) + " out of range (" +
                     std::to_string(names_.size()) + " entries)");
  }
  return names_[index];
}

TripleFormat parse_triple_format(std::string_view tag) {
  if (tag == "tsv") return TripleFormat::kTsv;
  if (tag == "whitespace" || tag == "ws") return TripleFormat::kWhitespace;
  throw ConfigError("unknown triple format '" + std::string(tag) + "'");
}

size_t auto_bitset_width(size_t relation_count) {
  if (relation_count <= kDefaultBitsetWidth) return kDefaultBitsetWidth;
  return std::bit_ceil(relation_count);
}

const RelationSet &KnowledgeGraph::relation_set(EntityIndex e) const {
  if (e >= relation_sets_.size()) {
    throw RangeError("entity index " + std::to_string(e) + " out of range (" +
                     std::to_string(relation_sets_.size()) + " entities)");
  }
  return relation_sets_[e];
}

const EntityText *KnowledgeGraph::description(EntityIndex e) const {
  auto it = descriptions_.find(e);
  return it == descriptions_.end() ? nullptr : &it->second;
}

const RelationText *KnowledgeGraph::relation_text(RelationIndex r) const {
  auto it = relation_texts_.find(r);
  return it == relation_texts_.end() ? nullptr : &it->second;
}

size_t GraphBuilder::TripleHash::operator()(const Triple &t) const {
  uint64_t h = splitmix64(t.head);
  h = splitmix64(h ^ t.relation);
  return splitmix64(h ^ t.tail);
}

EntityIndex GraphBuilder::add_entity(std::string_view name) {
  return graph_.entities_.intern(name);
}

RelationIndex GraphBuilder::add_relation(std::string_view name) {
  return graph_.relations_.intern(name);
}

bool GraphBuilder::add_triple(std::string_view head, std::string_view relation,
                              std::string_view tail) {
  Triple t;
  t.head = add_entity(head);
  t.relation = add_relation(relation);
  t.tail = add_entity(tail);
  if (!seen_.emplace(t, true).second) {
    ++graph_.duplicates_;
    return false;
  }
  graph_.triples_.push_back(t);
  return true;
}

void GraphBuilder::set_description(std::string_view entity, EntityText text) {
  graph_.descriptions_[add_entity(entity)] = std::move(text);
}

void GraphBuilder::set_relation_text(std::string_view relation,
                                     RelationText text) {
  graph_.relation_texts_[add_relation(relation)] = std::move(text);
}

KnowledgeGraph GraphBuilder::build() {
  size_t nrel = graph_.relations_.size();
  size_t width = width_ == 0 ? auto_bitset_width(nrel) : width_;
  if (nrel > width) {
    throw ConfigError(std::to_string(nrel) +
                      " relations exceed the bitset width " +
                      std::to_string(width));
  }
  graph_.width_ = width;
  graph_.relation_sets_.assign(graph_.entities_.size(), RelationSet(width));
  for (const Triple &t : graph_.triples_) {
    graph_.relation_sets_[t.head].set(t.relation);
  }
  seen_.clear();
  return std::move(graph_);
}

namespace {

std::string where(const std::string &source, size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

bool skip_line(std::string_view line) {
  if (line.empty() || line[0] == '#') return true;
  return split_whitespace(line).empty();
}

std::ifstream open_input(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

}  // namespace

void read_triples(std::istream &in, TripleFormat format, GraphBuilder &builder,
                  const std::string &source) {
  std::string raw;
  size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = chomp(raw);
    if (skip_line(line)) continue;
    auto fields = format == TripleFormat::kTsv ? split_fields(line, '\t')
                                               : split_whitespace(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw ParseError(where(source, lineno) +
                       "expected head, relation and tail fields");
    }
    builder.add_triple(fields[0], fields[1], fields[2]);
  }
}

void read_descriptions(std::istream &in, GraphBuilder &builder,
                       const std::string &source) {
  std::string raw;
  size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = chomp(raw);
    if (skip_line(line)) continue;
    auto fields = split_fields(line, '\t');
    if (fields.size() != 3 || fields[0].empty()) {
      throw ParseError(where(source, lineno) +
                       "expected entity, title and description fields");
    }
    builder.set_description(fields[0], {std::string(fields[1]),
                                        std::string(fields[2])});
  }
}

void read_relation_texts(std::istream &in, GraphBuilder &builder,
                         const std::string &source) {
  std::string raw;
  size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = chomp(raw);
    if (skip_line(line)) continue;
    auto fields = split_fields(line, '\t');
    if (fields.size() != 3 || fields[0].empty()) {
      throw ParseError(where(source, lineno) +
                       "expected relation, label and description fields");
    }
    builder.set_relation_text(fields[0], {std::string(fields[1]),
                                          std::string(fields[2])});
  }
}

KnowledgeGraph load_graph(const std::string &path, TripleFormat format,
                          const GraphLoadOptions &options) {
  GraphBuilder builder(options.bitset_width);
  {
    auto in = open_input(path);
    read_triples(in, format, builder, path);
  }
  if (!options.descriptions_path.empty()) {
    auto in = open_input(options.descriptions_path);
    read_descriptions(in, builder, options.descriptions_path);
  }
  if (!options.relation_texts_path.empty()) {
    auto in = open_input(options.relation_texts_path);
    read_relation_texts(in, builder, options.relation_texts_path);
  }
  return builder.build();
}

std::vector<Neighbor> nearest_by_type(const KnowledgeGraph &g, EntityIndex e,
                                      size_t top_k, int threads) {
  if (top_k == 0) throw RangeError("nearest_by_type: top_k must be >= 1");
  const RelationSet &query = g.relation_set(e);
  size_t n = g.num_entities();
  std::vector<size_t> dist(n);
  parallel_for(n, threads, [&](size_t i) {
    dist[i] = dist_kg(query, g.relation_set(static_cast<EntityIndex>(i)));
  });
  std::vector<Neighbor> all;
  all.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (i == e) continue;
    all.push_back({static_cast<EntityIndex>(i), dist[i]});
  }
  auto less = [](const Neighbor &a, const Neighbor &b) {
    return a.distance != b.distance ? a.distance < b.distance
                                    : a.entity < b.entity;
  };
  size_t k = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + k, all.end(), less);
  all.resize(k);
  return all;
}

std::vector<EntityIndex> filter_entities_by_min_relations(
    const KnowledgeGraph &g, size_t min_relations) {
  std::vector<EntityIndex> out;
  for (size_t i = 0; i < g.num_entities(); ++i) {
    auto e = static_cast<EntityIndex>(i);
    if (g.relation_set(e).cardinality() >= min_relations) out.push_back(e);
  }
  return out;
}

}  // namespace duck
