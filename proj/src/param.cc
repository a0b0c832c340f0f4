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

#include "duck/param.h"

#include <algorithm>
#include <cmath>

namespace duck {

Param::Param(std::string n, size_t r, size_t c)
    : name(std::move(n)),
      rows(r),
      cols(c),
      value(r * c, 0.0),
      grad(r * c, 0.0),
      moment1(r * c, 0.0),
      moment2(r * c, 0.0) {}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Param::init_normal(Rng &rng, double stddev) {
  for (double &x : value) x = stddev * rng.normal();
}

FeedForward::FeedForward(const std::string &prefix, size_t in, size_t hidden,
                         size_t out)
    : w1(prefix + ".w1", hidden, in),
      b1(prefix + ".b1", 1, hidden),
      w2(prefix + ".w2", out, hidden),
      b2(prefix + ".b2", 1, out) {}

void FeedForward::init(Rng &rng) {
  w1.init_normal(rng, 1.0 / std::sqrt(static_cast<double>(in_dim())));
  w2.init_normal(rng, 1.0 / std::sqrt(static_cast<double>(hidden_dim())));
  std::fill(b1.value.begin(), b1.value.end(), 0.0);
  std::fill(b2.value.begin(), b2.value.end(), 0.0);
}

Vec FeedForward::forward(std::span<const double> x, Cache *cache) const {
  check_same_dim(x.size(), in_dim(), "FeedForward input");
  size_t h = hidden_dim();
  Vec hidden(h);
  for (size_t i = 0; i < h; ++i) {
    hidden[i] = std::tanh(b1.value[i] + dot(w1.row(i), x));
  }
  size_t o = out_dim();
  Vec out(o);
  for (size_t i = 0; i < o; ++i) out[i] = b2.value[i] + dot(w2.row(i), hidden);
  if (cache) cache->hidden = std::move(hidden);
  return out;
}

void FeedForward::backward(std::span<const double> x, const Cache &cache,
                           std::span<const double> grad_out) {
  check_same_dim(grad_out.size(), out_dim(), "FeedForward cotangent");
  size_t h = hidden_dim();
  size_t o = out_dim();
  Vec grad_hidden(h, 0.0);
  for (size_t i = 0; i < o; ++i) {
    double g = grad_out[i];
    if (g == 0.0) continue;
    b2.grad[i] += g;
    auto wrow = w2.row(i);
    auto grow = w2.grad_row(i);
    for (size_t j = 0; j < h; ++j) {
      grow[j] += g * cache.hidden[j];
      grad_hidden[j] += g * wrow[j];
    }
  }
  for (size_t j = 0; j < h; ++j) {
    double a = cache.hidden[j];
    double g = grad_hidden[j] * (1.0 - a * a);
    if (g == 0.0) continue;
    b1.grad[j] += g;
    auto grow = w1.grad_row(j);
    for (size_t k = 0; k < x.size(); ++k) grow[k] += g * x[k];
  }
}

}  // namespace duck
