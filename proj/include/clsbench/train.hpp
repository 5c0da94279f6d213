// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clsbench/corpus.hpp"
#include "clsbench/model.hpp"
#include "clsbench/optim.hpp"

namespace clsbench {

enum class Objective { causal, masked };

/// Stage 1. Defaults are the paper's Table 1 values except step count and
/// batch size, which are desk-scale.
struct AdaptConfig {
  std::uint64_t max_steps = 2000;
  /// Sequences per step; tokens_per_step = batch_size * sequence length.
  std::size_t batch_size = 8;
  double lr_peak = 3e-3;
  nn::DecayKind decay = nn::DecayKind::cosine;
  double warmup = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double eval_fraction = 0.1;
  double save_fraction = 0.1;
  /// Share of packed sequences reserved for heldout LM loss.
  double heldout_fraction = 0.05;
  std::size_t max_eval_sequences = 64;
  double grad_clip = 0.0;
  /// Accepted for config compatibility; training always runs in fp32.
  bool fp16 = false;
  Objective objective = Objective::causal;
  double mask_rate = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint64_t save_interval() const;
  std::uint64_t eval_interval() const;
  /// Steps at which checkpoints are emitted (always includes max_steps).
  std::vector<std::uint64_t> save_steps() const;
};

struct Checkpoint {
  DecoderModel<float> model;
  nn::AdamWState optimizer;
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  /// Mean training loss since the previous checkpoint.
  double train_loss = 0.0;
  double eval_loss = 0.0;
};

struct LedgerRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  std::uint64_t tokens_seen = 0;
};

void append_ledger(const std::filesystem::path& path, const LedgerRecord& rec);
std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path);

struct AdaptResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<LedgerRecord> ledger;
};

struct HeldoutSplit {
  std::vector<PretrainSequence> train;
  std::vector<PretrainSequence> heldout;
};

HeldoutSplit split_heldout(std::span<const PretrainSequence> sequences, double heldout_fraction, std::uint64_t seed);

/// Mean next-token (or masked-token) loss over sequences.
double evaluate_lm(const DecoderModel<float>& model, std::span<const PretrainSequence> sequences,
                   Objective objective = Objective::causal, double mask_rate = 0.15, std::uint64_t seed = 0);

/// Continues pre-training `init` on the packed stream. Throws NumericError on
/// a non-finite loss.
AdaptResult domain_adapt(const DecoderModel<float>& init, std::span<const PretrainSequence> sequences,
                         const AdaptConfig& cfg, const std::function<void(const LedgerRecord&)>& on_record = {});

/// Stage 2. Defaults are the paper's Table 2 values.
struct FineTuneConfig {
  std::size_t epochs = 1;
  double lr = 1e-5;
  nn::DecayKind decay = nn::DecayKind::linear;
  double warmup = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;
  std::size_t max_len = 512;
  double grad_clip = 0.0;
  bool fp16 = false;
  /// Report the epoch with the best test top-1 (masked baseline protocol).
  bool select_best_epoch = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Classifier {
  DecoderModel<float> model;
  ClassifierHead<float> head;
};

struct EvalMetrics {
  double cls_loss = 0.0;
  std::map<int, double> top_k;
  std::size_t n_examples = 0;
};

/// True when label is among the k largest logits; equal logits rank the
/// lower class index first.
bool topk_hit(std::span<const float> logits, int label, int k);

EvalMetrics evaluate_classifier(const Classifier& clf, std::span<const ClassificationExample> test,
                                const std::vector<int>& ks = {1, 3, 5}, std::size_t batch_size = 64);

struct FineTuneResult {
  Classifier classifier;
  EvalMetrics test;
  std::size_t best_epoch = 1;
  std::vector<EvalMetrics> per_epoch;
};

/// Fresh head, end-to-end training of every parameter, then test metrics.
FineTuneResult fine_tune(const DecoderModel<float>& backbone, std::span<const ClassificationExample> train,
                         std::span<const ClassificationExample> test, const FineTuneConfig& cfg,
                         std::size_t n_classes);

}  // namespace clsbench
