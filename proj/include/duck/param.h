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

#ifndef DUCK_PARAM_H_
#define DUCK_PARAM_H_

#include <span>
#include <string>

#include "duck/common.h"

namespace duck {

// A trainable row-major matrix with its gradient buffer and the two moment
// estimates used by the Adam-style optimizer.
struct Param {
  std::string name;
  size_t rows = 0;
  size_t cols = 0;
  Vec value;
  Vec grad;
  Vec moment1;
  Vec moment2;

  Param() = default;
  Param(std::string name, size_t rows, size_t cols);

  size_t size() const { return value.size(); }
  std::span<double> row(size_t r) { return {value.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const {
    return {value.data() + r * cols, cols};
  }
  std::span<double> grad_row(size_t r) { return {grad.data() + r * cols, cols}; }

  void zero_grad();
  // Gaussian entries with the given standard deviation.
  void init_normal(Rng &rng, double stddev);
};

// Two-layer feed-forward network: out = W2 tanh(W1 x + b1) + b2.
class FeedForward {
 public:
  struct Cache {
    Vec hidden;  // tanh activations
  };

  FeedForward() = default;
  FeedForward(const std::string &prefix, size_t in, size_t hidden, size_t out);

  size_t in_dim() const { return w1.cols; }
  size_t hidden_dim() const { return w1.rows; }
  size_t out_dim() const { return w2.rows; }

  // Weights Gaussian with std 1/sqrt(fan_in), biases zero.
  void init(Rng &rng);

  Vec forward(std::span<const double> x, Cache *cache = nullptr) const;
  // Accumulates parameter gradients for cotangent grad_out. The input
  // receives no gradient.
  void backward(std::span<const double> x, const Cache &cache,
                std::span<const double> grad_out);

  Param w1, b1, w2, b2;
};

}  // namespace duck

#endif  // DUCK_PARAM_H_
