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

#include "duck/toy.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace duck {

namespace {

const char *const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                               "p", "r", "s", "t", "v", "z", "br", "st"};
const char *const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

// Readable names for the default three-type layout.
const char *const kTypeNames[] = {"person", "place", "film"};
const char *const kSignature[3][4] = {
    {"born_in", "occupation", "spouse", "educated_at"},
    {"capital_of", "population", "located_in", "mayor"},
    {"director", "cast_member", "genre", "release_date"}};
const char *const kShared[] = {"described_by", "named_after", "image",
                               "official_site"};

class WordMaker {
 public:
  explicit WordMaker(Rng &rng) : rng_(rng) {}

  // A fresh pseudo-word of 2-3 syllables.
  std::string fresh() {
    for (;;) {
      std::string w;
      size_t syl = 2 + rng_.below(2);
      for (size_t i = 0; i < syl; ++i) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> fresh(size_t n) {
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back(fresh());
    return out;
  }

 private:
  Rng &rng_;
  std::set<std::string> used_;
};

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 32);
  return w;
}

template <class T>
const T &pick(const std::vector<T> &items, Rng &rng) {
  return items[rng.below(items.size())];
}

std::vector<std::string> sample_distinct(const std::vector<std::string> &items,
                                         size_t n, Rng &rng) {
  std::vector<std::string> copy = items;
  rng.shuffle(copy);
  copy.resize(std::min(n, copy.size()));
  return copy;
}

std::string join(const std::vector<std::string> &words) {
  std::string out;
  for (const auto &w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

struct ToyEntity {
  std::string id;
  std::string surface;
  size_t type = 0;
  bool cue_free = false;
  std::vector<std::string> private_words;
  std::vector<size_t> group;  // entity indices sharing the surface name
};

}  // namespace

void ToyConfig::validate() const {
  if (types < 1 || entities_per_type < 1 || relations_per_type < 1) {
    throw ConfigError("toy counts must be >= 1");
  }
  if (!(shared_prob >= 0.0 && shared_prob <= 1.0)) {
    throw ConfigError("shared_prob must lie in [0, 1]");
  }
  if (!(cue_free_fraction >= 0.0 && cue_free_fraction <= 1.0)) {
    throw ConfigError("cue_free_fraction must lie in [0, 1]");
  }
  if (train_mentions < 1) throw ConfigError("train_mentions must be >= 1");
  if (cue_vocab < 1 || filler_vocab < 1) {
    throw ConfigError("toy vocabularies must be non-empty");
  }
}

ToyFiles generate_toy(const ToyConfig &c) {
  c.validate();
  Rng words_rng(derive_seed(c.seed, "toy/words"));
  Rng graph_rng(derive_seed(c.seed, "toy/graph"));
  Rng text_rng(derive_seed(c.seed, "toy/text"));
  WordMaker maker(words_rng);

  bool named = c.types == 3 && c.relations_per_type == 4 && c.shared_relations <= 4;
  std::vector<std::string> type_names(c.types);
  std::vector<std::vector<std::string>> signature(c.types);
  for (size_t t = 0; t < c.types; ++t) {
    type_names[t] = named ? kTypeNames[t] : "type" + std::to_string(t);
    for (size_t j = 0; j < c.relations_per_type; ++j) {
      signature[t].push_back(named ? kSignature[t][j]
                                   : "type" + std::to_string(t) + "_rel" +
                                         std::to_string(j));
    }
  }
  std::vector<std::string> shared;
  for (size_t j = 0; j < c.shared_relations; ++j) {
    shared.push_back(named ? kShared[j] : "shared_rel" + std::to_string(j));
  }

  std::vector<std::vector<std::string>> cues(c.types);
  for (auto &list : cues) list = maker.fresh(c.cue_vocab);
  std::vector<std::string> filler = maker.fresh(c.filler_vocab);

  // Surface groups: entity i of every type shares the i-th surface name.
  std::vector<ToyEntity> ents;
  for (size_t i = 0; i < c.entities_per_type; ++i) {
    std::string surface = capitalize(maker.fresh());
    std::vector<size_t> group;
    for (size_t t = 0; t < c.types; ++t) {
      group.push_back(ents.size());
      ToyEntity e;
      e.surface = surface;
      e.type = t;
      e.id = surface + "_(" + type_names[t] + ")";
      e.private_words = maker.fresh(c.private_words);
      ents.push_back(std::move(e));
    }
    for (size_t idx : group) ents[idx].group = group;
  }
  // Entity order in the files: by type, then by surface group.
  std::vector<size_t> order(ents.size());
  for (size_t k = 0; k < ents.size(); ++k) {
    size_t t = k / c.entities_per_type, i = k % c.entities_per_type;
    order[k] = i * c.types + t;
  }
  {
    std::vector<size_t> by_type(c.types, 0);
    size_t cue_free = static_cast<size_t>(
        c.cue_free_fraction * static_cast<double>(c.entities_per_type) + 0.5);
    for (size_t t = 0; t < c.types; ++t) {
      std::vector<size_t> members;
      for (size_t k : order) {
        if (ents[k].type == t) members.push_back(k);
      }
      text_rng.shuffle(members);
      for (size_t j = 0; j < std::min(cue_free, members.size()); ++j) {
        ents[members[j]].cue_free = true;
      }
    }
  }

  ToyFiles out;
  std::ostringstream triples, descriptions, relations, types;
  for (size_t k : order) {
    const ToyEntity &e = ents[k];
    std::vector<std::string> rels = signature[e.type];
    for (const auto &r : shared) {
      if (graph_rng.uniform() < c.shared_prob) rels.push_back(r);
    }
    for (const auto &r : rels) {
      size_t tail = k;
      if (ents.size() > 1) {
        tail = graph_rng.below(ents.size() - 1);
        if (tail >= k) ++tail;
      }
      triples << e.id << '\t' << r << '\t' << ents[tail].id << '\n';
    }
    std::vector<std::string> body = e.private_words;
    for (const auto &w : sample_distinct(cues[e.type], c.cue_words, text_rng)) {
      body.push_back(w);
    }
    text_rng.shuffle(body);
    descriptions << e.id << '\t' << e.surface << '\t' << join(body) << '\n';
    types << e.id << '\t' << type_names[e.type] << '\n';
  }
  auto relation_line = [&](const std::string &r) {
    std::string label = r;
    std::replace(label.begin(), label.end(), '_', ' ');
    relations << r << '\t' << label << '\t' << "relation " << label << '\n';
  };
  for (const auto &sig : signature) {
    for (const auto &r : sig) relation_line(r);
  }
  for (const auto &r : shared) relation_line(r);

  nlohmann::ordered_json candidates = nlohmann::ordered_json::object();
  auto context = [&](const ToyEntity &e, bool with_cues, bool with_private) {
    std::vector<std::string> words = sample_distinct(filler, c.filler_words, text_rng);
    if (with_cues) {
      for (const auto &w : sample_distinct(cues[e.type], c.cue_words, text_rng)) {
        words.push_back(w);
      }
    }
    if (with_private) {
      for (const auto &w :
           sample_distinct(e.private_words, c.private_per_context, text_rng)) {
        words.push_back(w);
      }
    }
    text_rng.shuffle(words);
    size_t at = text_rng.below(words.size() + 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(at),
                 "[MS] " + e.surface + " [ME]");
    return join(words);
  };
  auto split = [&](const std::string &prefix, size_t per_entity, bool train) {
    std::ostringstream rows;
    size_t n = 0;
    for (size_t k : order) {
      const ToyEntity &e = ents[k];
      bool cue = train ? !e.cue_free : true;
      bool priv = train ? true : !e.cue_free;
      for (size_t j = 0; j < per_entity; ++j) {
        char id[64];
        std::snprintf(id, sizeof(id), "%s-%05zu", prefix.c_str(), n++);
        rows << id << '\t' << e.id << '\t' << context(e, cue, priv) << '\n';
        auto list = nlohmann::ordered_json::array();
        for (size_t g : e.group) list.push_back(ents[g].id);
        candidates[id] = std::move(list);
      }
    }
    return rows.str();
  };
  out.train = split("train", c.train_mentions, true);
  out.val = split("val", c.eval_mentions, false);
  out.test = split("test", c.eval_mentions, false);
  out.triples = triples.str();
  out.descriptions = descriptions.str();
  out.relations = relations.str();
  out.types = types.str();
  out.candidates = candidates.dump(1) + "\n";
  return out;
}

void write_toy(const ToyConfig &config, const std::string &dir) {
  ToyFiles files = generate_toy(config);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  auto put = [&](const char *name, const std::string &text) {
    std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
  };
  put("triples.tsv", files.triples);
  put("descriptions.tsv", files.descriptions);
  put("relations.tsv", files.relations);
  put("train.tsv", files.train);
  put("val.tsv", files.val);
  put("test.tsv", files.test);
  put("candidates.json", files.candidates);
  put("types.tsv", files.types);
}

}  // namespace duck
