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

#ifndef DUCK_TEXT_H_
#define DUCK_TEXT_H_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "duck/common.h"
#include "duck/kg.h"

namespace duck {

inline constexpr std::string_view kMentionStart = "[MS]";
inline constexpr std::string_view kMentionEnd = "[ME]";

// Lower-cased whitespace tokens. Marker tokens keep their upper-case form.
std::vector<std::string> tokenize(std::string_view text);

// A context window with exactly one marked span. `tokens` holds the
// context without the markers; the span is [span_begin, span_end).
struct MentionText {
  std::vector<std::string> tokens;
  size_t span_begin = 0;
  size_t span_end = 0;
};

// Throws ParseError unless the text holds exactly one [MS] ... [ME] pair.
MentionText parse_mention(std::string_view context);

// Keeps at most max_tokens tokens (markers included) centered on the span.
MentionText truncate_mention(const MentionText &m, size_t max_tokens);

// Sparse bag of hashed tokens; entries sorted by bucket.
struct SparseFeatures {
  std::vector<std::pair<uint32_t, double>> entries;
  friend bool operator==(const SparseFeatures &, const SparseFeatures &) =
      default;
};

// Bag of hashed tokens weighted by count / sqrt(total). Token order does
// not matter.
SparseFeatures hash_bag(std::span<const std::string> tokens, size_t buckets);

// Mention tokens are namespaced by position: span tokens, context tokens and
// the two markers all land in distinct buckets.
SparseFeatures mention_features(const MentionText &m, size_t buckets,
                                size_t max_tokens);

// Title tokens, a separator and the body, truncated to max_tokens.
SparseFeatures entity_features(const EntityText &text, size_t buckets,
                               size_t max_tokens);

std::vector<std::string> relation_tokens(const RelationText &text,
                                         size_t max_tokens);

// One row of a mention dataset: mention_id<TAB>gold_entity<TAB>context.
struct MentionRecord {
  std::string id;
  std::string gold_name;
  // Unset when the gold entity is not in the knowledge graph.
  std::optional<EntityIndex> gold;
  MentionText text;
};

struct Dataset {
  std::vector<MentionRecord> mentions;
  size_t size() const { return mentions.size(); }
  bool empty() const { return mentions.empty(); }
  // Mentions whose gold entity is in the graph.
  size_t in_kb() const;
};

Dataset read_dataset(std::istream &in, const KnowledgeGraph &g,
                     const std::string &source = "<stream>");
Dataset load_dataset(const std::string &path, const KnowledgeGraph &g);

// mention_id -> candidate entity indices. Unknown candidate identifiers are
// dropped with a warning; an empty list is a ParseError.
using CandidateSet = std::unordered_map<std::string, std::vector<EntityIndex>>;
CandidateSet parse_candidates(std::string_view json, const KnowledgeGraph &g);
CandidateSet load_candidates(const std::string &path, const KnowledgeGraph &g);

}  // namespace duck

#endif  // DUCK_TEXT_H_
