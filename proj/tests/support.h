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


#ifndef DUCK_TESTS_SUPPORT_H_
#define DUCK_TESTS_SUPPORT_H_

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <sstream>

#include "duck/common.h"
#include "duck/kg.h"
#include "duck/text.h"
#include "duck/toy.h"

namespace duck::testing {

inline Vec uniform_vec(Rng &rng, size_t n, double lo, double hi) {
  Vec v(n);
  for (double &x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline Vec normal_vec(Rng &rng, size_t n) {
  Vec v(n);
  for (double &x : v) x = rng.normal();
  return v;
}

// Gaussian vector with its last component made positive and bounded away
// from zero.
inline Vec half_sphere_vec(Rng &rng, size_t n) {
  Vec v = normal_vec(rng, n);
  v.back() = std::abs(v.back()) + 1e-3;
  return v;
}

inline RelationSet random_relation_set(Rng &rng, size_t width, double p) {
  RelationSet s(width);
  for (size_t r = 0; r < width; ++r) {
    if (rng.uniform() < p) s.set(static_cast<RelationIndex>(r));
  }
  return s;
}

inline double rel_diff(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("duck_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

struct ToyTask {
  KnowledgeGraph graph;
  Dataset train;
  Dataset val;
  Dataset test;
  CandidateSet candidates;
};

inline ToyTask load_toy(const ToyFiles &files) {
  GraphBuilder b;
  std::istringstream triples(files.triples), desc(files.descriptions),
      rels(files.relations);
  read_triples(triples, TripleFormat::kTsv, b);
  read_descriptions(desc, b);
  read_relation_texts(rels, b);
  ToyTask t;
  t.graph = b.build();
  std::istringstream train(files.train), val(files.val), test(files.test);
  t.train = read_dataset(train, t.graph);
  t.val = read_dataset(val, t.graph);
  t.test = read_dataset(test, t.graph);
  t.candidates = parse_candidates(files.candidates, t.graph);
  return t;
}

// A small toy task that trains in well under a second.
inline ToyConfig small_toy_config(uint64_t seed = 5) {
  ToyConfig c;
  c.types = 3;
  c.entities_per_type = 8;
  c.relations_per_type = 3;
  c.shared_relations = 2;
  c.train_mentions = 2;
  c.seed = seed;
  return c;
}

}  // namespace duck::testing

#endif  // DUCK_TESTS_SUPPORT_H_
