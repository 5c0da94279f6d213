// SPDX-License-Identifier: Apache-2.0
#include "clsbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"
#include "json.hpp"

namespace clsbench {

using nlohmann::json;

void AdaptConfig::validate() const {
  require(max_steps >= 1, "adapt: max-steps must be positive");
  require(batch_size >= 1, "adapt: batch-size must be positive");
  require(lr_peak > 0, "adapt: learning-rate must be positive");
  require(warmup >= 0 && warmup < 1, "adapt: warmup must lie in [0,1)");
  require(eval_fraction > 0 && eval_fraction <= 1, "adapt: eval-steps must lie in (0,1]");
  require(save_fraction > 0 && save_fraction <= 1, "adapt: save-steps must lie in (0,1]");
  require(heldout_fraction > 0 && heldout_fraction < 1, "adapt: heldout fraction must lie in (0,1)");
  require(mask_rate > 0 && mask_rate < 1, "adapt: mask rate must lie in (0,1)");
  require(save_interval() >= 1, "adapt: save-steps rounds to zero steps");
  require(eval_interval() >= 1, "adapt: eval-steps rounds to zero steps");
}

std::uint64_t AdaptConfig::save_interval() const {
  return static_cast<std::uint64_t>(std::llround(save_fraction * static_cast<double>(max_steps)));
}

std::uint64_t AdaptConfig::eval_interval() const {
  return static_cast<std::uint64_t>(std::llround(eval_fraction * static_cast<double>(max_steps)));
}

std::vector<std::uint64_t> AdaptConfig::save_steps() const {
  std::vector<std::uint64_t> out;
  const auto every = save_interval();
  for (std::uint64_t s = every; s <= max_steps; s += every) out.push_back(s);
  if (out.empty() || out.back() != max_steps) out.push_back(max_steps);
  return out;
}

void append_ledger(const std::filesystem::path& path, const LedgerRecord& rec) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + path.string());
  out << json{{"step", rec.step},
              {"lr", rec.lr},
              {"train_loss", rec.train_loss},
              {"eval_loss", rec.eval_loss ? json(*rec.eval_loss) : json(nullptr)},
              {"tokens_seen", rec.tokens_seen}}
             .dump()
      << "\n";
}

std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<LedgerRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      LedgerRecord r;
      r.step = j.at("step").get<std::uint64_t>();
      r.lr = j.at("lr").get<double>();
      r.train_loss = j.at("train_loss").get<double>();
      if (!j.at("eval_loss").is_null()) r.eval_loss = j.at("eval_loss").get<double>();
      r.tokens_seen = j.at("tokens_seen").get<std::uint64_t>();
      out.push_back(r);
    } catch (const json::exception& e) {
      throw ContractError("ledger: " + std::string(e.what()));
    }
  }
  return out;
}

HeldoutSplit split_heldout(std::span<const PretrainSequence> sequences, double heldout_fraction, std::uint64_t seed) {
  HeldoutSplit out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const bool held = keyed_uniform(seed ^ 0x4e1d, "seq-" + std::to_string(i)) < heldout_fraction;
    (held ? out.heldout : out.train).push_back(sequences[i]);
  }
  return out;
}

namespace {

struct MaskedBatch {
  TokenBatch batch;
  std::vector<std::int32_t> targets;
};

MaskedBatch make_masked_batch(std::span<const PretrainSequence> seqs, double rate, std::uint64_t seed) {
  std::vector<std::vector<TokenId>> masked;
  std::vector<std::vector<std::size_t>> positions;
  std::vector<std::vector<TokenId>> originals;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto m = mask_tokens(seqs[i], rate, seed * 1000003ULL + i, Vocab::kPad);
    masked.push_back(std::move(m.token_ids));
    positions.push_back(std::move(m.positions));
    originals.push_back(std::move(m.targets));
  }
  MaskedBatch out{TokenBatch::from_sequences(masked), {}};
  out.targets.assign(out.batch.batch * out.batch.time, nn::kIgnoreTarget);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t k = 0; k < positions[i].size(); ++k) {
      out.targets[i * out.batch.time + positions[i][k]] = originals[i][k];
    }
  }
  return out;
}

nn::Tensor<float> objective_loss(const DecoderModel<float>& model, std::span<const PretrainSequence> seqs,
                                 Objective objective, double mask_rate, std::uint64_t seed) {
  if (objective == Objective::masked) {
    auto mb = make_masked_batch(seqs, mask_rate, seed);
    return mlm_loss(model, mb.batch, mb.targets);
  }
  return lm_loss(model, TokenBatch::from_sequences(seqs));
}

std::size_t total_size(const std::vector<nn::Tensor<float>*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->size();
  return n;
}

}  // namespace

double evaluate_lm(const DecoderModel<float>& model, std::span<const PretrainSequence> sequences, Objective objective,
                   double mask_rate, std::uint64_t seed) {
  require(!sequences.empty(), "evaluate_lm: no sequences");
  constexpr std::size_t kBatch = 8;
  double weighted = 0;
  double weight = 0;
  for (std::size_t off = 0; off < sequences.size(); off += kBatch) {
    const auto n = std::min(kBatch, sequences.size() - off);
    auto chunk = sequences.subspan(off, n);
    const double loss = objective_loss(model, chunk, objective, mask_rate, seed + off).item();
    weighted += loss * static_cast<double>(n);
    weight += static_cast<double>(n);
  }
  return weighted / weight;
}

AdaptResult domain_adapt(const DecoderModel<float>& init, std::span<const PretrainSequence> sequences,
                         const AdaptConfig& cfg, const std::function<void(const LedgerRecord&)>& on_record) {
  cfg.validate();
  require(!sequences.empty(), "adapt: empty sequence stream");
  const std::size_t seq_len = sequences.front().size();
  for (const auto& s : sequences) require(s.size() == seq_len, "adapt: sequences must share one length");
  require(seq_len <= init.config().context_length, "adapt: sequence length exceeds max-position-embeddings");
  for (const auto& s : sequences) {
    for (auto id : s) {
      require(id >= 0 && static_cast<std::size_t>(id) < init.config().vocab_size, "adapt: token outside model vocab");
    }
  }

  auto split = split_heldout(sequences, cfg.heldout_fraction, cfg.seed);
  require(!split.train.empty() && !split.heldout.empty(), "adapt: too few sequences for a heldout split");
  if (split.heldout.size() > cfg.max_eval_sequences) split.heldout.resize(cfg.max_eval_sequences);

  DecoderModel<float> model = init.clone();
  auto params = model.parameters();
  auto state = nn::AdamWState::for_params(total_size(params), cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.lr_peak);
  const nn::ScheduleSpec sched{cfg.decay, cfg.warmup, cfg.max_steps, cfg.lr_peak};
  const std::uint64_t tokens_per_step = cfg.batch_size * seq_len;
  const auto saves = cfg.save_steps();
  const auto eval_every = cfg.eval_interval();

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  auto next_batch = [&]() {
    std::vector<PretrainSequence> batch;
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        Rng rng(cfg.seed * 7919 + epoch++);
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        cursor = 0;
      }
      batch.push_back(split.train[order[cursor++]]);
    }
    return batch;
  };

  AdaptResult result;
  double interval_loss = 0;
  std::size_t interval_count = 0;
  std::size_t save_idx = 0;
  for (std::uint64_t step = 1; step <= cfg.max_steps; ++step) {
    const auto batch = next_batch();
    for (auto* p : params) p->zero_grad();
    auto loss = objective_loss(model, batch, cfg.objective, cfg.mask_rate, cfg.seed * 104729 + step);
    const double lv = loss.item();
    if (!std::isfinite(lv)) {
      std::ostringstream os;
      os << "adapt: non-finite loss at step " << step << " (tokens_seen " << (step - 1) * tokens_per_step << ")";
      throw NumericError(os.str());
    }
    loss.backward();
    if (cfg.grad_clip > 0) nn::clip_grad_norm<float>(params, cfg.grad_clip);
    const double lr = nn::lr_at_step(sched, step);
    nn::adamw_step<float>(params, state, lr);
    interval_loss += lv;
    ++interval_count;

    LedgerRecord rec{step, lr, lv, std::nullopt, step * tokens_per_step};
    const bool save_now = save_idx < saves.size() && saves[save_idx] == step;
    if (step % eval_every == 0 || save_now) {
      rec.eval_loss = evaluate_lm(model, split.heldout, cfg.objective, cfg.mask_rate, cfg.seed);
      if (!std::isfinite(*rec.eval_loss)) throw NumericError("adapt: non-finite eval loss at step " + std::to_string(step));
    }
    result.ledger.push_back(rec);
    if (on_record) on_record(rec);
    if (save_now) {
      result.checkpoints.push_back(Checkpoint{model.clone(), state, step, rec.tokens_seen,
                                              interval_loss / static_cast<double>(interval_count), *rec.eval_loss});
      interval_loss = 0;
      interval_count = 0;
      ++save_idx;
    }
  }
  return result;
}

void FineTuneConfig::validate() const {
  require(epochs >= 1, "finetune: num-train-epochs must be at least 1");
  require(lr > 0, "finetune: learning-rate must be positive");
  require(warmup >= 0 && warmup < 1, "finetune: warmup must lie in [0,1)");
  require(batch_size >= 1, "finetune: batch-size must be positive");
  require(max_len >= 1, "finetune: max-position-embeddings must be positive");
}

bool topk_hit(std::span<const float> logits, int label, int k) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), "topk: label out of range");
  const float target = logits[static_cast<std::size_t>(label)];
  int rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const float v = logits[j];
    if (v > target || (v == target && static_cast<int>(j) < label)) ++rank;
  }
  return rank < k;
}

EvalMetrics evaluate_classifier(const Classifier& clf, std::span<const ClassificationExample> test,
                                const std::vector<int>& ks, std::size_t batch_size) {
  require(!test.empty(), "evaluate: empty test set");
  const std::size_t n_classes = clf.head.n_classes();
  // Length-sorted batches cut padding; rows are batch-independent.
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return test[a].token_ids.size() < test[b].token_ids.size(); });

  EvalMetrics m;
  m.n_examples = test.size();
  for (int k : ks) m.top_k[k] = 0.0;
  double loss_sum = 0;
  for (std::size_t off = 0; off < order.size(); off += batch_size) {
    const auto n = std::min(batch_size, order.size() - off);
    std::vector<std::vector<TokenId>> seqs;
    std::vector<std::int32_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ex = test[order[off + i]];
      require(ex.label >= 0 && static_cast<std::size_t>(ex.label) < n_classes, "evaluate: label outside catalog");
      seqs.push_back(ex.token_ids);
      labels.push_back(ex.label);
    }
    const auto logits = forward_classify(clf.model, clf.head, TokenBatch::from_sequences(seqs));
    auto lv = logits.values();
    loss_sum += nn::cross_entropy_value<float>(lv, n, n_classes, labels) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = lv.subspan(i * n_classes, n_classes);
      for (int k : ks) {
        if (topk_hit(row, labels[i], k)) m.top_k[k] += 1.0;
      }
    }
  }
  m.cls_loss = loss_sum / static_cast<double>(test.size());
  for (auto& [k, v] : m.top_k) v /= static_cast<double>(test.size());
  return m;
}

FineTuneResult fine_tune(const DecoderModel<float>& backbone, std::span<const ClassificationExample> train,
                         std::span<const ClassificationExample> test, const FineTuneConfig& cfg,
                         std::size_t n_classes) {
  cfg.validate();
  require(n_classes >= 1, "finetune: empty catalog");
  require(train.size() >= cfg.batch_size, "finetune: fewer training examples than one batch");
  require(cfg.max_len <= backbone.config().context_length, "finetune: max length exceeds backbone positions");
  for (const auto& ex : train) {
    require(ex.label >= 0 && static_cast<std::size_t>(ex.label) < n_classes, "finetune: label outside catalog");
    require(!ex.token_ids.empty() && ex.token_ids.size() <= cfg.max_len, "finetune: example length out of range");
  }

  Classifier clf{backbone.clone(), ClassifierHead<float>::init(backbone.config().d_model, n_classes, cfg.seed ^ 0xC1A55)};
  std::vector<nn::Tensor<float>*> params = clf.model.parameters();
  params.push_back(&clf.head.weight);
  params.push_back(&clf.head.bias);
  auto state = nn::AdamWState::for_params(total_size(params), cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.lr);
  const std::size_t steps_per_epoch = train.size() / cfg.batch_size;
  const nn::ScheduleSpec sched{cfg.decay, cfg.warmup, steps_per_epoch * cfg.epochs, cfg.lr};

  FineTuneResult result{clf.model.clone(), clf.head.clone(), {}, 1, {}};
  double best_top1 = -1;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(cfg.seed * 31337 + epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<std::vector<TokenId>> seqs;
      std::vector<std::int32_t> labels;
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const auto& ex = train[order[b * cfg.batch_size + i]];
        seqs.push_back(ex.token_ids);
        labels.push_back(ex.label);
      }
      for (auto* p : params) p->zero_grad();
      auto loss = nn::cross_entropy(forward_classify(clf.model, clf.head, TokenBatch::from_sequences(seqs)), labels);
      if (!std::isfinite(loss.item())) throw NumericError("finetune: non-finite loss at step " + std::to_string(step + 1));
      loss.backward();
      if (cfg.grad_clip > 0) nn::clip_grad_norm<float>(params, cfg.grad_clip);
      ++step;
      nn::adamw_step<float>(params, state, nn::lr_at_step(sched, step));
    }
    if (cfg.select_best_epoch || epoch == cfg.epochs) {
      if (test.empty()) continue;
      auto metrics = evaluate_classifier(clf, test);
      result.per_epoch.push_back(metrics);
      const double top1 = metrics.top_k.count(1) ? metrics.top_k.at(1) : -metrics.cls_loss;
      if (!cfg.select_best_epoch || top1 > best_top1) {
        best_top1 = top1;
        result.best_epoch = epoch;
        result.test = metrics;
        result.classifier = Classifier{clf.model.clone(), clf.head.clone()};
      }
    }
  }
  if (test.empty()) result.classifier = Classifier{clf.model.clone(), clf.head.clone()};
  return result;
}

}  // namespace clsbench
