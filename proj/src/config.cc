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

#include "duck/config.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace duck {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

void set_stage(StageConfig &st, std::string_view field, const std::string &v) {
  if (field == "epochs") {
    st.epochs = parse_uint(v, field);
  } else if (field == "max_steps") {
    st.max_steps = parse_uint(v, field);
  } else if (field == "batch_size") {
    st.batch_size = parse_uint(v, field);
  } else if (field == "max_entities") {
    st.max_entities = parse_uint(v, field);
  } else if (field == "alpha") {
    st.alpha = parse_double(v, field);
  } else if (field == "min_relations") {
    st.min_relations = parse_uint(v, field);
  } else if (field == "hard_negatives") {
    st.hard_negatives = parse_uint(v, field);
  } else if (field == "in_batch_negatives") {
    st.in_batch_negatives = parse_bool(v, field);
  } else if (field == "lr") {
    st.lr_max = parse_double(v, field);
  } else if (field == "warmup") {
    st.warmup = parse_uint(v, field);
  } else if (field == "grad_accum") {
    st.grad_accum = parse_uint(v, field);
  } else if (field == "linear_decay") {
    st.linear_decay = parse_bool(v, field);
  } else if (field == "gamma") {
    st.gamma = parse_double(v, field);
  } else if (field == "lambda_duck") {
    st.lambda_duck = parse_double(v, field);
  } else if (field == "lambda_l2") {
    st.lambda_l2 = parse_double(v, field);
  } else if (field == "k") {
    st.k_negatives = parse_uint(v, field);
  } else {
    throw ConfigError("unknown stage key '" + std::string(field) + "'");
  }
}

void flatten(const nlohmann::json &j, const std::string &prefix,
             std::vector<std::pair<std::string, std::string>> &out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      flatten(it.value(), key, out);
    }
  } else if (j.is_array()) {
    if (prefix != "stages") {
      throw ConfigError("arrays are only allowed for 'stages'");
    }
    for (size_t i = 0; i < j.size(); ++i) {
      flatten(j[i], "stage." + std::to_string(i + 1), out);
    }
  } else if (j.is_string()) {
    out.emplace_back(prefix, j.get<std::string>());
  } else if (j.is_boolean()) {
    out.emplace_back(prefix, j.get<bool>() ? "true" : "false");
  } else if (j.is_number_unsigned()) {
    out.emplace_back(prefix, std::to_string(j.get<uint64_t>()));
  } else if (j.is_number()) {
    out.emplace_back(prefix, format_double(j.get<double>()));
  } else {
    throw ConfigError("unsupported value for '" + prefix + "'");
  }
}

}  // namespace

void StageConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_entities < batch_size) {
    throw ConfigError("max_entities must be >= batch_size");
  }
  if (epochs < 1 && max_steps == 0) {
    throw ConfigError("a stage needs epochs >= 1 or max_steps >= 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(lr_max >= 0.0) || !std::isfinite(lr_max)) {
    throw ConfigError("lr must be finite and >= 0");
  }
  if (grad_accum < 1) throw ConfigError("grad_accum must be >= 1");
}

void TrainConfig::validate() const {
  model.validate();
  if (stages.empty()) throw ConfigError("at least one stage is required");
  for (size_t i = 0; i < stages.size(); ++i) {
    try {
      stages[i].validate();
      stage_weights(i).validate();
    } catch (const ConfigError &e) {
      throw ConfigError("stage " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

LossWeights TrainConfig::stage_weights(size_t stage) const {
  const StageConfig &st = stages.at(stage);
  LossWeights w = loss;
  w.alpha = st.alpha;
  if (st.gamma) w.gamma = *st.gamma;
  if (st.lambda_duck) w.lambda_duck = *st.lambda_duck;
  if (st.lambda_l2) w.lambda_l2 = *st.lambda_l2;
  if (st.k_negatives) w.k_negatives = *st.k_negatives;
  if (no_types) w.lambda_duck = 0.0;
  return w;
}

void TrainConfig::set(std::string_view key, const std::string &value) {
  if (key.starts_with("stage.")) {
    auto rest = key.substr(6);
    auto dot = rest.find('.');
    if (dot == std::string_view::npos) {
      throw ConfigError("stage key '" + std::string(key) +
                        "' needs the form stage.<n>.<field>");
    }
    uint64_t n = parse_uint(rest.substr(0, dot), key);
    if (n < 1 || n > 64) throw ConfigError("stage number out of range in '" +
                                           std::string(key) + "'");
    if (stages.size() < n) stages.resize(n);
    set_stage(stages[n - 1], rest.substr(dot + 1), value);
    return;
  }
  if (key.starts_with("model.")) key.remove_prefix(6);
  if (key == "seed") {
    seed = parse_uint(value, key);
    model.seed = seed;
  } else if (model.set(key, value)) {
  } else if (key == "gamma") {
    loss.gamma = parse_double(value, key);
  } else if (key == "lambda_duck") {
    loss.lambda_duck = parse_double(value, key);
  } else if (key == "lambda_l2") {
    loss.lambda_l2 = parse_double(value, key);
  } else if (key == "k") {
    loss.k_negatives = parse_uint(value, key);
  } else if (key == "optimizer") {
    if (value == "adam") {
      optimizer.kind = OptimizerKind::kAdam;
    } else if (value == "sgd") {
      optimizer.kind = OptimizerKind::kSgd;
    } else {
      throw ConfigError("optimizer must be adam or sgd");
    }
  } else if (key == "beta1") {
    optimizer.beta1 = parse_double(value, key);
  } else if (key == "beta2") {
    optimizer.beta2 = parse_double(value, key);
  } else if (key == "adam_epsilon") {
    optimizer.epsilon = parse_double(value, key);
  } else if (key == "weight_decay") {
    optimizer.weight_decay = parse_double(value, key);
  } else if (key == "bitset_width") {
    bitset_width = parse_uint(value, key);
  } else if (key == "clip_norm") {
    clip_norm = parse_double(value, key);
  } else if (key == "log_every") {
    log_every = parse_uint(value, key);
  } else if (key == "checkpoint_every") {
    checkpoint_every = parse_uint(value, key);
  } else if (key == "val_every") {
    val_every = parse_uint(value, key);
  } else if (key == "no_types") {
    no_types = parse_bool(value, key);
  } else if (key == "threads") {
    threads = static_cast<int>(parse_uint(value, key));
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

TrainConfig TrainConfig::parse_text(const std::string &text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (auto hash = v.find('#'); hash != std::string_view::npos) {
      v = v.substr(0, hash);
    }
    v = trim(v);
    if (v.empty()) continue;
    auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    try {
      c.set(trim(v.substr(0, eq)), std::string(trim(v.substr(eq + 1))));
    } catch (const ConfigError &e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::parse_json(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("invalid JSON config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("JSON config must be an object");
  std::vector<std::pair<std::string, std::string>> kv;
  flatten(j, "", kv);
  TrainConfig c;
  for (const auto &[k, v] : kv) c.set(k, v);
  c.validate();
  return c;
}

TrainConfig TrainConfig::parse(const std::string &text) {
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') continue;
    if (ch == '{') return parse_json(text);
    break;
  }
  return parse_text(text);
}

TrainConfig TrainConfig::load(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string TrainConfig::serialize() const {
  std::ostringstream out;
  std::string m = model.serialize();
  // The model block carries the seed.
  out << m;
  out << "gamma=" << format_double(loss.gamma) << "\n";
  out << "lambda_duck=" << format_double(loss.lambda_duck) << "\n";
  out << "lambda_l2=" << format_double(loss.lambda_l2) << "\n";
  out << "k=" << loss.k_negatives << "\n";
  out << "optimizer=" << (optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd")
      << "\n";
  out << "beta1=" << format_double(optimizer.beta1) << "\n";
  out << "beta2=" << format_double(optimizer.beta2) << "\n";
  out << "adam_epsilon=" << format_double(optimizer.epsilon) << "\n";
  out << "weight_decay=" << format_double(optimizer.weight_decay) << "\n";
  out << "bitset_width=" << bitset_width << "\n";
  out << "clip_norm=" << format_double(clip_norm) << "\n";
  out << "log_every=" << log_every << "\n";
  out << "checkpoint_every=" << checkpoint_every << "\n";
  out << "val_every=" << val_every << "\n";
  out << "no_types=" << (no_types ? "true" : "false") << "\n";
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageConfig &st = stages[i];
    std::string p = "stage." + std::to_string(i + 1) + ".";
    out << p << "epochs=" << st.epochs << "\n";
    out << p << "max_steps=" << st.max_steps << "\n";
    out << p << "batch_size=" << st.batch_size << "\n";
    out << p << "max_entities=" << st.max_entities << "\n";
    out << p << "alpha=" << format_double(st.alpha) << "\n";
    out << p << "min_relations=" << st.min_relations << "\n";
    out << p << "hard_negatives=" << st.hard_negatives << "\n";
    out << p << "in_batch_negatives=" << (st.in_batch_negatives ? "true" : "false")
        << "\n";
    out << p << "lr=" << format_double(st.lr_max) << "\n";
    out << p << "warmup=" << st.warmup << "\n";
    out << p << "grad_accum=" << st.grad_accum << "\n";
    out << p << "linear_decay=" << (st.linear_decay ? "true" : "false") << "\n";
    if (st.gamma) out << p << "gamma=" << format_double(*st.gamma) << "\n";
    if (st.lambda_duck) {
      out << p << "lambda_duck=" << format_double(*st.lambda_duck) << "\n";
    }
    if (st.lambda_l2) out << p << "lambda_l2=" << format_double(*st.lambda_l2) << "\n";
    if (st.k_negatives) out << p << "k=" << *st.k_negatives << "\n";
  }
  return out.str();
}

}  // namespace duck
