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

#ifndef DUCK_COMMON_H_
#define DUCK_COMMON_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace duck {

using Vec = std::vector<double>;
using EntityIndex = uint32_t;
using RelationIndex = uint32_t;

// Base class for all errors raised by the toolkit. The CLI turns these into
// a one-line "error: <kind>: <message>" diagnostic and a non-zero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string &message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string &kind() const { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string &message) : Error("parse", message) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string &message) : Error("range", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string &message)
      : Error("dimension", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &message) : Error("config", message) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string &message)
      : Error("empty-input", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string &message)
      : Error("numeric", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string &message) : Error("io", message) {}
};

// Throws DimensionError unless a == b.
void check_same_dim(size_t a, size_t b, std::string_view what);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Numerically stable -log(sigmoid(-x)) = log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

// 64-bit FNV-1a.
uint64_t fnv1a(std::string_view text, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t splitmix64(uint64_t x);

// Derives an independent 64-bit seed for a named random stream. All
// randomness in a run flows from one base seed through these streams, so
// data generation, initialization, shuffling and negative sampling can be
// varied independently.
uint64_t derive_seed(uint64_t base, std::string_view stream,
                     std::initializer_list<uint64_t> ids = {});

// Seeded random source with portable uniform/normal draws. The engine's
// output sequence is fixed by the C++ standard; the distributions are
// implemented here so draws do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();

  template <class T>
  void shuffle(std::vector<T> &items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
// contiguous chunks; callers that need deterministic results write into
// per-index slots and reduce sequentially afterwards.
void parallel_for(size_t n, int threads, const std::function<void(size_t)> &fn);

// Splits on a single separator character; empty fields are kept.
std::vector<std::string_view> split_fields(std::string_view line, char sep);
// Splits on runs of ASCII whitespace; empty fields are dropped.
std::vector<std::string_view> split_whitespace(std::string_view line);
// Drops a trailing '\r' left by CRLF files.
std::string_view chomp(std::string_view line);

// Strict scalar parsing for config values; throws ConfigError naming `what`.
double parse_double(std::string_view text, std::string_view what);
uint64_t parse_uint(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
// Shortest round-tripping decimal form.
std::string format_double(double x);

// Writes a warning line to stderr unless warnings are silenced.
void log_warning(const std::string &message);
void set_warnings_enabled(bool enabled);

}  // namespace duck

#endif  // DUCK_COMMON_H_
