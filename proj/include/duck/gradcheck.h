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

#ifndef DUCK_GRADCHECK_H_
#define DUCK_GRADCHECK_H_

#include <optional>
#include <string>
#include <vector>

#include "duck/boxes.h"
#include "duck/common.h"

namespace duck {

// Central finite differences of loss_total against the analytic gradient on
// random small problems. An entry is not compared when a perturbation flips
// any recorded branch (half-sphere fold, box face, ReLU); a configuration is
// redrawn when its base point lies within `margin` of a branch.
struct GradcheckOptions {
  size_t trials = 50;
  std::vector<size_t> dims{4, 8};
  size_t min_relations = 3;
  size_t max_relations = 6;
  size_t min_entities = 3;
  size_t max_entities = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  double margin = 1e-6;
  // |a - n| / max(|a|, |n|, floor)
  double floor = 1e-6;
  uint64_t seed = 0;
  std::optional<BoxMode> mode;  // alternate modes when unset
};

struct GradcheckWorst {
  std::string param;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  size_t trial = 0;
};

struct GradcheckReport {
  size_t trials = 0;
  size_t redrawn = 0;       // configurations too close to a branch
  size_t checked = 0;       // compared entries
  size_t excluded = 0;      // entries whose perturbation crossed a branch
  size_t failures = 0;      // entries above tolerance
  GradcheckWorst worst;
  bool passed() const { return failures == 0 && checked > 0; }
};

GradcheckReport run_gradcheck(const GradcheckOptions &options);

std::string gradcheck_report_json(const GradcheckReport &report);

}  // namespace duck

#endif  // DUCK_GRADCHECK_H_
