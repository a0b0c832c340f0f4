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

#include "duck/text.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace duck {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view raw : split_whitespace(text)) {
    std::string tok(raw);
    std::string upper = tok;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    if (upper == kMentionStart || upper == kMentionEnd) {
      out.push_back(upper);
      continue;
    }
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(tok));
  }
  return out;
}

MentionText parse_mention(std::string_view context) {
  MentionText m;
  int starts = 0, ends = 0;
  bool open = false;
  for (auto &tok : tokenize(context)) {
    if (tok == kMentionStart) {
      if (++starts > 1 || ends > 0) break;
      open = true;
      m.span_begin = m.tokens.size();
    } else if (tok == kMentionEnd) {
      if (++ends > 1 || !open) break;
      open = false;
      m.span_end = m.tokens.size();
    } else {
      m.tokens.push_back(std::move(tok));
    }
  }
  if (starts != 1 || ends != 1 || open) {
    throw ParseError("mention context needs exactly one " +
                     std::string(kMentionStart) + " ... " +
                     std::string(kMentionEnd) + " span");
  }
  return m;
}

MentionText truncate_mention(const MentionText &m, size_t max_tokens) {
  // Two slots go to the markers.
  size_t budget = max_tokens > 2 ? max_tokens - 2 : 0;
  if (m.tokens.size() <= budget) return m;
  size_t span_len = m.span_end - m.span_begin;
  MentionText out;
  if (span_len >= budget) {
    out.tokens.assign(m.tokens.begin() + m.span_begin,
                      m.tokens.begin() + m.span_begin + budget);
    out.span_begin = 0;
    out.span_end = budget;
    return out;
  }
  size_t room = budget - span_len;
  size_t left = std::min(m.span_begin, room / 2);
  size_t right = std::min(m.tokens.size() - m.span_end, room - left);
  left = std::min(m.span_begin, room - right);
  size_t begin = m.span_begin - left;
  size_t end = m.span_end + right;
  out.tokens.assign(m.tokens.begin() + begin, m.tokens.begin() + end);
  out.span_begin = m.span_begin - begin;
  out.span_end = m.span_end - begin;
  return out;
}

SparseFeatures hash_bag(std::span<const std::string> tokens, size_t buckets) {
  SparseFeatures f;
  if (tokens.empty() || buckets == 0) return f;
  std::map<uint32_t, double> counts;
  for (const auto &t : tokens) {
    counts[static_cast<uint32_t>(fnv1a(t) % buckets)] += 1.0;
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
  for (auto [b, c] : counts) f.entries.emplace_back(b, c * scale);
  return f;
}

SparseFeatures mention_features(const MentionText &m, size_t buckets,
                                size_t max_tokens) {
  MentionText t = truncate_mention(m, max_tokens);
  std::vector<std::string> keyed;
  keyed.reserve(t.tokens.size() + 2);
  for (size_t i = 0; i < t.tokens.size(); ++i) {
    bool in_span = i >= t.span_begin && i < t.span_end;
    keyed.push_back((in_span ? "m:" : "c:") + t.tokens[i]);
  }
  keyed.emplace_back(kMentionStart);
  keyed.emplace_back(kMentionEnd);
  return hash_bag(keyed, buckets);
}

SparseFeatures entity_features(const EntityText &text, size_t buckets,
                               size_t max_tokens) {
  std::vector<std::string> keyed;
  for (auto &t : tokenize(text.title)) keyed.push_back("t:" + t);
  keyed.emplace_back("[SEP]");
  for (auto &t : tokenize(text.body)) keyed.push_back("b:" + t);
  if (keyed.size() > max_tokens) keyed.resize(max_tokens);
  return hash_bag(keyed, buckets);
}

std::vector<std::string> relation_tokens(const RelationText &text,
                                         size_t max_tokens) {
  std::vector<std::string> out = tokenize(text.label);
  out.emplace_back("[SEP]");
  for (auto &t : tokenize(text.description)) out.push_back(std::move(t));
  if (out.size() > max_tokens) out.resize(max_tokens);
  return out;
}

size_t Dataset::in_kb() const {
  return std::count_if(mentions.begin(), mentions.end(),
                       [](const MentionRecord &m) { return m.gold.has_value(); });
}

Dataset read_dataset(std::istream &in, const KnowledgeGraph &g,
                     const std::string &source) {
  Dataset ds;
  std::string raw;
  size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = chomp(raw);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": expected mention_id, gold_entity and context fields");
    }
    MentionRecord rec;
    rec.id = std::string(fields[0]);
    rec.gold_name = std::string(fields[1]);
    rec.gold = g.entities().find(fields[1]);
    try {
      rec.text = parse_mention(fields[2]);
    } catch (const ParseError &e) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.mentions.push_back(std::move(rec));
  }
  return ds;
}

Dataset load_dataset(const std::string &path, const KnowledgeGraph &g) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_dataset(in, g, path);
}

CandidateSet parse_candidates(std::string_view json, const KnowledgeGraph &g) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("candidates: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("candidates: expected a JSON object of mention -> list");
  }
  CandidateSet out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_array()) {
      throw ParseError("candidates: entry '" + it.key() + "' is not a list");
    }
    std::vector<EntityIndex> list;
    for (const auto &name : it.value()) {
      if (!name.is_string()) {
        throw ParseError("candidates: entry '" + it.key() +
                         "' holds a non-string id");
      }
      auto id = g.entities().find(name.get<std::string>());
      if (!id) {
        log_warning("candidates: dropping unknown entity '" +
                    name.get<std::string>() + "'");
        continue;
      }
      list.push_back(*id);
    }
    if (list.empty()) {
      throw ParseError("candidates: empty candidate list for '" + it.key() +
                       "'");
    }
    out.emplace(it.key(), std::move(list));
  }
  return out;
}

CandidateSet load_candidates(const std::string &path, const KnowledgeGraph &g) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_candidates(buf.str(), g);
}

}  // namespace duck
