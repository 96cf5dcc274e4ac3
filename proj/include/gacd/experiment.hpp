// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// File-driven experiments: corpus generation, training, evaluation and
// sweeps, configured by one `key = value` file with [sections].
//
// Output layout under the output directory:
//   corpus/train.jsonl, corpus/test.jsonl, corpus/stats.json
//   model/checkpoint.bin, model/vocab.tsv, model/loss.csv
//   eval/report_<mode>.json, eval/trace_<mode>.jsonl
//   sweep/sweep.csv
// Every command also writes the effective configuration as config.ini.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gacd/bench.hpp"
#include "gacd/corpus.hpp"
#include "gacd/decoder.hpp"
#include "gacd/model.hpp"

namespace gacd {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir;     // empty: $GACD_OUTPUT_DIR, else "gacd_out"
  std::string corpus_dir;  // empty: <out_dir>/corpus
  std::string model_dir;   // empty: <out_dir>/model

  CorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  DecoderConfig decoder;

  std::vector<DecodeMode> modes = {DecodeMode::kBaseline, DecodeMode::kFull};
  std::size_t jobs = 1;
  double cog_threshold = 0.5;
  /// Trace JSONL path; empty disables traces. With several modes the mode
  /// name is appended to the file stem.
  std::string trace_out;
  /// Early-stop terminal words; empty means ".".
  std::vector<std::string> terminals;
  /// When non-empty, only test scenes whose object set equals this list.
  std::vector<std::string> eval_objects;

  AblationGrid grid = {{DecodeMode::kBaseline, DecodeMode::kVisualAmplification,
                        DecodeMode::kObjectAware, DecodeMode::kFull},
                       {1.0, 3.0, 5.0},
                       {0.05, 0.07},
                       {InfluenceNorm::kL1}};

  /// Applies one `section.key` assignment; unknown keys and malformed values
  /// throw kInvalidArgument.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::string& path);
  std::string serialize() const;

  void validate() const;

  std::string resolved_out_dir() const;
  std::string resolved_corpus_dir() const;
  std::string resolved_model_dir() const;

  /// Sub-configurations with seeds derived from the root seed.
  CorpusConfig corpus_config() const;
  TrainConfig train_config() const;
  ModelConfig model_config() const;
};

struct GenSummary {
  std::size_t train = 0;
  std::size_t test = 0;
  std::string train_path, test_path, stats_path;
};

struct TrainSummary {
  std::vector<double> loss_curve;
  bool reached_plateau = false;
  std::string checkpoint_path;
};

struct EvalSummary {
  std::vector<std::pair<DecodeMode, MetricsReport>> reports;
  std::vector<std::string> report_paths;
};

GenSummary cmd_gen(const ExperimentConfig& config);
TrainSummary cmd_train(const ExperimentConfig& config);
EvalSummary cmd_eval(const ExperimentConfig& config);
std::vector<AblationCell> cmd_sweep(const ExperimentConfig& config);

/// Parses a comma-separated list with `parse`, rejecting empty items.
std::vector<DecodeMode> parse_modes(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace gacd
