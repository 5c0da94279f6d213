// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration behind the CLI: a run manifest, the artifact
// layout under <out>/<run-id>/, and the stages that fill it.
//
//   corpus/     pretrain.ndjson finetune.ndjson catalog.csv pool.ndjson
//   tokenizer/  vocab.txt
//   adapt/<preset>/      ledger.ndjson step-NNNNNN.ckpt
//   finetune/<preset>/step-NNNNNN/  model.ckpt metrics.json
//   scaling/    scaling_points.csv scaling_fits.csv *.svg
//   stamps/<command>.json
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clsbench/corpus.hpp"
#include "clsbench/scaling.hpp"
#include "clsbench/train.hpp"
#include "json.hpp"

namespace clsbench {

struct CorpusSpec {
  /// Cases whose labeled replies feed fine-tuning and evaluation.
  std::size_t n_cases = 3000;
  /// Cases formatted into the domain-adaptation stream (separate seed).
  std::size_t pretrain_cases = 3000;
  std::size_t n_templates = 64;
  /// Optional catalog CSV; overrides n_templates when set.
  std::filesystem::path catalog;
  double ambiguity = 0.25;
  double train_fraction = 0.5;
};

struct RunManifest {
  std::filesystem::path out = "runs";
  std::string run_id = "default";
  std::uint64_t seed = 0;
  /// Parallel fine-tunes during a sweep.
  std::size_t workers = 1;

  CorpusSpec corpus;
  std::size_t vocab_size = 512;
  /// Transcripts used to learn BPE merges.
  std::size_t tokenizer_cases = 500;

  std::vector<std::string> presets{"nano", "micro", "mini"};
  /// Adaptation window ([adapt] max-position-embeddings).
  std::size_t context_length = 128;

  /// lr_peak is replaced per preset unless learning-rate is set.
  /// Defaults are sized for a single laptop core, not the paper's runs.
  AdaptConfig adapt = [] {
    AdaptConfig a;
    a.max_steps = 400;
    a.save_fraction = 0.2;
    a.eval_fraction = 0.2;
    return a;
  }();
  std::optional<double> adapt_lr;
  std::map<std::string, double> adapt_lr_by_preset;
  std::map<std::string, std::uint64_t> max_steps_by_preset;

  FineTuneConfig finetune = [] {
    FineTuneConfig c;
    c.lr = 1e-3;
    c.batch_size = 8;
    c.max_len = 48;
    c.epochs = 3;
    return c;
  }();
  std::map<std::string, double> finetune_lr_by_preset;

  /// Parses the INI manifest; unknown sections or keys are errors.
  static RunManifest parse(const std::string& text);
  static RunManifest load(const std::filesystem::path& path);

  /// Effective configuration as sorted "section.key = value" lines.
  std::string canonical() const;
  std::string config_hash() const;
  std::filesystem::path run_dir() const { return out / run_id; }

  AdaptConfig adapt_for(const std::string& preset) const;
  FineTuneConfig finetune_for(const std::string& preset) const;
  Preset preset(const std::string& name) const;
};

struct CorpusArtifacts {
  std::vector<Transcript> pretrain;
  std::vector<Transcript> finetune;
  TemplateCatalog catalog;
};

CorpusArtifacts build_corpus(const RunManifest& m);
void write_corpus(const CorpusArtifacts& c, const std::filesystem::path& dir, std::size_t max_pool = 10000);
CorpusArtifacts read_corpus(const std::filesystem::path& dir);

/// /v1/predict bodies built from the contexts of labeled replies.
std::vector<std::string> request_pool(std::span<const Transcript> transcripts, std::size_t max_items);

Vocab build_tokenizer(const RunManifest& m, std::span<const Transcript> pretrain);
std::vector<PretrainSequence> pretrain_sequences(std::span<const Transcript> pretrain, const Vocab& vocab,
                                                 std::size_t context_length);

struct ClassificationData {
  std::vector<ClassificationExample> train;
  std::vector<ClassificationExample> test;
};

ClassificationData classification_data(const RunManifest& m, std::span<const Transcript> finetune,
                                       const Vocab& vocab);

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, const std::string& preset,
                                      std::uint64_t step);
std::filesystem::path finetune_dir(const std::filesystem::path& run_dir, const std::string& preset,
                                   std::uint64_t step);

/// Saves an adaptation checkpoint with its step, tokens and losses in the
/// manifest extras.
void save_adapt_checkpoint(const Checkpoint& c, const Vocab& vocab, const std::string& preset,
                           const std::filesystem::path& path);

struct LoadedCheckpoint {
  DecoderModel<float> model;
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  double eval_loss = 0.0;
};
LoadedCheckpoint load_adapt_checkpoint(const std::filesystem::path& path, const Vocab& vocab);

/// Adapted checkpoint steps present on disk for a preset, ascending.
std::vector<std::uint64_t> list_checkpoints(const std::filesystem::path& run_dir, const std::string& preset);

/// Writes model.ckpt (backbone + head, serving extras) and metrics.json.
void save_finetune(const FineTuneResult& r, const Vocab& vocab, const std::string& preset,
                   const LoadedCheckpoint& source, std::size_t max_len, const std::filesystem::path& dir);

nlohmann::json metrics_to_json(const EvalMetrics& m);
EvalMetrics metrics_from_json(const nlohmann::json& j);

/// Reads every finetune/<preset>/step-*/metrics.json under the run.
std::vector<CheckpointMeasure> read_measures(const RunManifest& m);

/// Writes points, fits and plots under <run>/scaling.
std::vector<ScalingPoint> write_scaling_report(const RunManifest& m, std::span<const CheckpointMeasure> measures,
                                               std::vector<std::string>* warnings = nullptr);

using Progress = std::function<void(const std::string&)>;

/// gen-corpus, train-tokenizer, adapt and finetune for every preset and
/// checkpoint, then the scaling report.
std::vector<ScalingPoint> run_sweep(const RunManifest& m, const Progress& progress = {});

/// Hex FNV-1a of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

/// <run>/stamps/<command>.json: seed, config hash, and the digest of each
/// listed artifact (paths relative to the run directory).
void write_stamp(const RunManifest& m, const std::string& command, const std::vector<std::filesystem::path>& artifacts);

}  // namespace clsbench
