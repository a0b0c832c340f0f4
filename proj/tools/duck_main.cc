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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "duck/config.h"
#include "duck/eval.h"
#include "duck/gradcheck.h"
#include "duck/kg.h"
#include "duck/model.h"
#include "duck/toy.h"
#include "duck/train.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace duck;

namespace {

int exit_code(const std::string &kind) {
  if (kind == "parse") return 3;
  if (kind == "range") return 4;
  if (kind == "dimension") return 5;
  if (kind == "config") return 6;
  if (kind == "empty-input") return 7;
  if (kind == "numeric") return 8;
  if (kind == "io") return 9;
  return 10;
}

struct KgFlags {
  std::string path;
  std::string format = "tsv";
  std::string descriptions;
  std::string relation_texts;
  size_t bitset_width = 0;
};

// A directory holds triples.tsv and optionally descriptions.tsv and
// relations.tsv.
KnowledgeGraph load_kg(const KgFlags &f) {
  if (f.path.empty()) throw ConfigError("--kg is required");
  GraphLoadOptions opts;
  opts.bitset_width = f.bitset_width;
  opts.descriptions_path = f.descriptions;
  opts.relation_texts_path = f.relation_texts;
  std::string triples = f.path;
  if (fs::is_directory(f.path)) {
    fs::path dir(f.path);
    triples = (dir / "triples.tsv").string();
    if (opts.descriptions_path.empty() && fs::exists(dir / "descriptions.tsv")) {
      opts.descriptions_path = (dir / "descriptions.tsv").string();
    }
    if (opts.relation_texts_path.empty() && fs::exists(dir / "relations.tsv")) {
      opts.relation_texts_path = (dir / "relations.tsv").string();
    }
  }
  return load_graph(triples, parse_triple_format(f.format), opts);
}

void add_kg_flags(CLI::App *cmd, KgFlags &f) {
  cmd->add_option("--kg", f.path, "Triples file or directory with triples.tsv");
  cmd->add_option("--format", f.format, "Triple format: tsv or whitespace");
  cmd->add_option("--descriptions", f.descriptions, "Entity descriptions TSV");
  cmd->add_option("--relation-texts", f.relation_texts, "Relation texts TSV");
  cmd->add_option("--bitset-width", f.bitset_width,
                  "Relation bitset width (0 picks the default)");
}

void write_file(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void ensure_dir(const std::string &dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

EmbeddingState load_state(const std::string &path, const KnowledgeGraph &g) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  Checkpoint ck = Checkpoint::load(path);
  std::istringstream in(ck.state_blob, std::ios::binary);
  return EmbeddingState::read(in, g);
}

RelationIndex find_relation(const KnowledgeGraph &g, const std::string &name) {
  if (name.empty()) throw ConfigError("--relation is required");
  auto r = g.relations().find(name);
  if (!r) throw RangeError("unknown relation '" + name + "'");
  return *r;
}

EntityIndex find_entity(const KnowledgeGraph &g, const std::string &name) {
  if (name.empty()) throw ConfigError("--entity is required");
  auto e = g.entities().find(name);
  if (!e) throw RangeError("unknown entity '" + name + "'");
  return *e;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Entity disambiguation with relation boxes", "duck"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::string out;
  std::string config_path;
  std::string checkpoint;
  std::string dataset;
  std::string candidates_path;
  std::string relation;
  std::string entity;
  size_t top = 10;
  KgFlags kg;

  auto common = [&](CLI::App *cmd) {
    cmd->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { seed = v; seed_set = true; }, "Random seed");
    cmd->add_option("--threads", threads, "Worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", out, "Output path");
  };

  // ingest
  auto *ingest = app.add_subcommand("ingest", "Load a knowledge graph and summarize it");
  common(ingest);
  add_kg_flags(ingest, kg);

  // gen-toy
  ToyConfig toy;
  auto *gen = app.add_subcommand("gen-toy", "Write the synthetic linking task");
  common(gen);
  gen->add_option("--types", toy.types, "Latent types");
  gen->add_option("--entities", toy.entities_per_type, "Entities per type");
  gen->add_option("--relations", toy.relations_per_type,
                  "Signature relations per type");
  gen->add_option("--shared", toy.shared_relations, "Shared relations");
  gen->add_option("--mentions", toy.train_mentions,
                  "Training mentions per entity");
  gen->add_option("--eval-mentions", toy.eval_mentions,
                  "Validation and test mentions per entity");
  gen->add_option("--cue-free", toy.cue_free_fraction,
                  "Share of entities whose training contexts lack type cues");

  // train
  bool no_types = false;
  bool resume = false;
  std::string mode;
  std::string val_path;
  std::optional<size_t> stop_after;
  auto *train = app.add_subcommand("train", "Train a model");
  common(train);
  add_kg_flags(train, kg);
  train->add_option("--config", config_path, "Config file (key=value or JSON)");
  train->add_option("--dataset", dataset, "Training mentions TSV");
  train->add_option("--val", val_path, "Validation mentions TSV");
  train->add_option("--candidates", candidates_path,
                    "Candidate JSON used for validation");
  train->add_option("--checkpoint", checkpoint,
                    "Checkpoint path (default <out>/checkpoint.bin)");
  train->add_option("--mode", mode, "Box mode: polar or cartesian")
      ->check(CLI::IsMember({"polar", "cartesian"}));
  train->add_flag("--no-types", no_types, "Drop the typing loss");
  train->add_flag("--resume", resume, "Continue from the checkpoint");
  train->add_option("--stop-after", stop_after,
                    "Checkpoint and stop after this many optimizer steps");

  // eval
  bool no_candidates = false;
  std::string types_path;
  auto *eval = app.add_subcommand("eval", "Link a mention set and score it");
  common(eval);
  add_kg_flags(eval, kg);
  eval->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  eval->add_option("--dataset", dataset, "Mentions TSV");
  eval->add_option("--candidates", candidates_path, "Candidate JSON");
  eval->add_flag("--no-candidates", no_candidates,
                 "Score every mention against all entities");
  eval->add_option("--types", types_path,
                   "Entity types TSV for neighbour purity");
  eval->add_option("--top", top, "Neighbours for purity");

  // query-box
  auto *qbox = app.add_subcommand("query-box", "Entities nearest to a relation box");
  common(qbox);
  add_kg_flags(qbox, kg);
  qbox->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  qbox->add_option("--relation", relation, "Relation name");
  qbox->add_option("--top", top, "Rows to show");

  // query-entity
  auto *qent = app.add_subcommand("query-entity", "Relation boxes nearest to an entity");
  common(qent);
  add_kg_flags(qent, kg);
  qent->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  qent->add_option("--entity", entity, "Entity name");
  qent->add_option("--top", top, "Rows to show");

  // neighbors
  auto *nbr = app.add_subcommand("neighbors", "Entities with the closest relation sets");
  common(nbr);
  add_kg_flags(nbr, kg);
  nbr->add_option("--entity", entity, "Entity name");
  nbr->add_option("--top", top, "Rows to show");

  // gradcheck
  GradcheckOptions gc;
  std::optional<size_t> gc_dim;
  std::optional<size_t> gc_relations;
  auto *grad = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  common(grad);
  grad->add_option("--trials", gc.trials, "Random configurations");
  grad->add_option("--tol", gc.tolerance, "Relative error tolerance");
  grad->add_option("--d", gc_dim, "Embedding dimension (default 4 and 8)");
  grad->add_option("--relations", gc_relations, "Relation count (default 3-6)");
  grad->add_option("--mode", mode, "Box mode (default both)")
      ->check(CLI::IsMember({"polar", "cartesian"}));

  // dump-boxes
  auto *dump = app.add_subcommand("dump-boxes", "Write every relation box as JSON");
  common(dump);
  add_kg_flags(dump, kg);
  dump->add_option("--checkpoint", checkpoint, "Trained checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*ingest) {
      KnowledgeGraph g = load_kg(kg);
      nlohmann::ordered_json j;
      j["entities"] = g.num_entities();
      j["relations"] = g.num_relations();
      j["triples"] = g.triples().size();
      j["duplicate_triples"] = g.duplicate_triples();
      j["bitset_width"] = g.bitset_width();
      std::string text = j.dump(2) + "\n";
      if (!out.empty()) write_file(out, text);
      std::cout << text;
    } else if (*gen) {
      if (out.empty()) throw ConfigError("--out is required");
      toy.seed = seed;
      write_toy(toy, out);
      std::cout << "wrote toy task to " << out << "\n";
    } else if (*train) {
      KnowledgeGraph g = load_kg(kg);
      TrainConfig cfg = config_path.empty() ? TrainConfig{}
                                            : TrainConfig::load(config_path);
      if (seed_set) cfg.set("seed", std::to_string(seed));
      cfg.threads = threads;
      if (!mode.empty()) cfg.set("mode", mode);
      if (no_types) cfg.no_types = true;
      cfg.validate();
      if (dataset.empty()) throw ConfigError("--dataset is required");
      Dataset ds = load_dataset(dataset, g);
      if (ds.empty()) throw EmptyInputError("training set has no mentions");

      if (out.empty()) out = ".";
      ensure_dir(out);
      if (checkpoint.empty()) checkpoint = (fs::path(out) / "checkpoint.bin").string();

      Dataset val_ds;
      std::optional<CandidateSet> cands;
      Validation val;
      Validation *val_ptr = nullptr;
      if (!val_path.empty()) {
        val_ds = load_dataset(val_path, g);
        if (!candidates_path.empty()) cands = load_candidates(candidates_path, g);
        val.dataset = &val_ds;
        val.candidates = cands ? &*cands : nullptr;
        val_ptr = &val;
      }

      std::optional<Checkpoint> ck;
      TrainOptions opts;
      if (resume) {
        ck = Checkpoint::load(checkpoint);
        opts.resume = &*ck;
      }
      std::string report_path = (fs::path(out) / "report.jsonl").string();
      std::ofstream report(report_path, resume ? std::ios::app : std::ios::trunc);
      if (!report) throw IoError("cannot write '" + report_path + "'");
      opts.report = &report;
      opts.checkpoint_path = checkpoint;
      opts.stop_after_steps = stop_after;
      if (val_ptr) {
        // Mention inputs depend only on the config, so a fresh state works.
        EmbeddingState probe = EmbeddingState::create(cfg.model, g, {});
        if (cfg.model.mention_encoder.kind == EncoderKind::kTable) {
          throw ConfigError("validation needs the hashed mention encoder");
        }
        val.inputs = probe.prepare_mentions(val_ds);
      }
      write_file((fs::path(out) / "config.txt").string(), cfg.serialize());
      TrainResult res = run_training(cfg, g, ds, val_ptr, opts);
      nlohmann::ordered_json j;
      j["interrupted"] = res.interrupted;
      j["steps"] = res.state.step;
      j["checkpoint"] = checkpoint;
      if (!res.records.empty()) {
        j["last"] = nlohmann::ordered_json::parse(res.records.back().to_json());
      }
      std::cout << j.dump(2) << "\n";
    } else if (*eval) {
      KnowledgeGraph g = load_kg(kg);
      if (dataset.empty()) throw ConfigError("--dataset is required");
      Dataset ds = load_dataset(dataset, g);
      if (ds.empty()) throw EmptyInputError("dataset has no mentions");
      EmbeddingState state = load_state(checkpoint, g);
      std::optional<CandidateSet> cands;
      if (!no_candidates && !candidates_path.empty()) {
        cands = load_candidates(candidates_path, g);
      }
      EvalReport rep = evaluate(state, ds, cands ? &*cands : nullptr, threads);
      auto j = nlohmann::ordered_json::parse(eval_report_json(rep));
      j["mode"] = cands ? "candidates" : "all";
      BoxSet boxes = materialize_boxes(state);
      std::vector<Vec> points = entity_box_points(state, threads);
      ContainmentReport cr = containment_report(boxes, g, points);
      j["containment_rate"] = cr.positive_rate;
      j["negative_exclusion"] = cr.negative_exclusion;
      auto per = nlohmann::ordered_json::array();
      for (const auto &row : cr.per_relation) {
        per.push_back({{"relation", g.relations().name(row.relation)},
                       {"positives", row.positives},
                       {"contained", row.contained},
                       {"negatives", row.negatives},
                       {"excluded", row.excluded}});
      }
      j["per_relation"] = std::move(per);
      if (!types_path.empty()) {
        std::vector<int> types = load_types(types_path, g);
        j["type_purity"] =
            type_purity_at_k(state.encode_all_entities(threads), types, top, threads);
        j["kg_type_purity"] = kg_type_purity_at_k(g, types, top, threads);
      }
      std::string text = j.dump(2) + "\n";
      if (!out.empty()) {
        ensure_dir(out);
        write_file((fs::path(out) / "eval.json").string(), text);
        std::ofstream preds((fs::path(out) / "predictions.tsv").string());
        if (!preds) throw IoError("cannot write predictions");
        write_predictions(preds, rep, g);
      }
      std::cout << text;
    } else if (*qbox) {
      KnowledgeGraph g = load_kg(kg);
      RelationIndex r = find_relation(g, relation);
      EmbeddingState state = load_state(checkpoint, g);
      auto rows = entities_nearest_box(materialize_boxes(state),
                                       entity_box_points(state, threads), r, top);
      std::cout << format_entity_table(rows, g);
      if (!out.empty()) write_file(out, entity_ranking_json(rows, g));
    } else if (*qent) {
      KnowledgeGraph g = load_kg(kg);
      EntityIndex e = find_entity(g, entity);
      EmbeddingState state = load_state(checkpoint, g);
      Vec point = box_point(state.boxes().mode(), state.encode_entity(e));
      auto rows = boxes_nearest_entity(materialize_boxes(state), point, top);
      std::cout << format_relation_table(rows, g);
      if (!out.empty()) write_file(out, relation_ranking_json(rows, g));
    } else if (*nbr) {
      KnowledgeGraph g = load_kg(kg);
      EntityIndex e = find_entity(g, entity);
      auto rows = nearest_by_type(g, e, top, threads);
      auto j = nlohmann::ordered_json::array();
      size_t width = 6;
      for (const auto &n : rows) width = std::max(width, g.entities().name(n.entity).size());
      std::cout << "rank  " << std::string("entity") + std::string(width - 6, ' ')
                << "  dist_kg\n";
      for (size_t i = 0; i < rows.size(); ++i) {
        const std::string &name = g.entities().name(rows[i].entity);
        std::string rank = std::to_string(i + 1);
        std::cout << rank << std::string(4 - std::min<size_t>(4, rank.size()), ' ')
                  << "  " << name << std::string(width - name.size(), ' ') << "  "
                  << rows[i].distance << "\n";
        j.push_back({{"entity", name}, {"dist_kg", rows[i].distance}});
      }
      if (!out.empty()) write_file(out, j.dump(2) + "\n");
    } else if (*grad) {
      gc.seed = seed;
      if (gc_dim) gc.dims = {*gc_dim};
      if (gc_relations) gc.min_relations = gc.max_relations = *gc_relations;
      if (!mode.empty()) gc.mode = parse_box_mode(mode);
      GradcheckReport rep = run_gradcheck(gc);
      std::string text = gradcheck_report_json(rep);
      if (!out.empty()) write_file(out, text);
      std::cout << text;
      if (!rep.passed()) {
        std::cerr << "error: gradcheck: worst " << rep.worst.param << "["
                  << rep.worst.index << "] analytic " << rep.worst.analytic
                  << " numeric " << rep.worst.numeric << " rel-err "
                  << rep.worst.rel_error << "\n";
        return 1;
      }
    } else if (*dump) {
      KnowledgeGraph g = load_kg(kg);
      EmbeddingState state = load_state(checkpoint, g);
      std::string text = dump_boxes_json(materialize_boxes(state), g);
      if (!out.empty()) {
        write_file(out, text);
      } else {
        std::cout << text;
      }
    }
  } catch (const Error &e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 10;
  }
  return 0;
}
