// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstring>
#include <vector>

#include "clsbench/checkpoint.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/gradcheck.hpp"
#include "clsbench/model.hpp"
#include "clsbench/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clsbench;
using nn::Tensor;

namespace {

ModelConfig tiny_config(bool causal = true) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 270;
  c.context_length = 16;
  c.causal = causal;
  return c;
}

std::vector<TokenId> random_seq(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<TokenId> s(len);
  for (auto& id : s) id = static_cast<TokenId>(rng.below(vocab - 2));
  return s;
}

template <typename T>
std::vector<T> row(const Tensor<T>& t, std::size_t r) {
  const std::size_t cols = t.dim(1);
  auto v = t.values();
  return {v.begin() + static_cast<std::ptrdiff_t>(r * cols), v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
}

}  // namespace

TEST_CASE("presets and parameter accounting") {
  for (const auto& name : preset_names()) {
    const auto p = family_preset(name, 512, 64);
    CHECK(p.config.causal);
    DecoderModel<float> m(p.config, 1);
    std::uint64_t n = 0;
    for (const auto& np : m.named_parameters()) n += np.tensor->size();
    CHECK(n == count_params(p.config));
  }
  const auto nano = count_params(family_preset("nano", 512, 64).config);
  const auto micro = count_params(family_preset("micro", 512, 64).config);
  const auto mini = count_params(family_preset("mini", 512, 64).config);
  CHECK(static_cast<double>(micro) / static_cast<double>(nano) >= 3.0);
  CHECK(static_cast<double>(micro) / static_cast<double>(nano) <= 6.0);
  CHECK(static_cast<double>(mini) / static_cast<double>(micro) >= 3.0);
  CHECK(static_cast<double>(mini) / static_cast<double>(micro) <= 6.0);
  CHECK(family_preset("nano", 512, 64).lr_peak > family_preset("mini", 512, 64).lr_peak);
  CHECK_THROWS_AS(family_preset("huge", 512, 64), ContractError);

  auto c = tiny_config();
  auto deeper = c;
  deeper.n_layers *= 2;
  CHECK(count_params(deeper) > count_params(c));
  CHECK(flops_for_tokens(c, 0) == 0.0);
  // 6 * N * tokens, checked against the literal example N = 1e6, 2e6 tokens.
  CHECK(6.0 * 1e6 * 2e6 == doctest::Approx(1.2e13));
  CHECK(flops_for_tokens(c, 2000) == doctest::Approx(6.0 * static_cast<double>(count_params(c)) * 2000));

  auto bad = c;
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("full nano model gradients match finite differences in 64-bit") {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = family_preset("nano", 270, 12).config;
  auto model = DecoderModel<float>(cfg, 5).cast<double>();
  auto head = ClassifierHead<float>::init(cfg.d_model, 6, 9).cast<double>();
  Rng rng(17);
  const std::vector<std::vector<TokenId>> seqs{random_seq(rng, 9, cfg.vocab_size), random_seq(rng, 12, cfg.vocab_size),
                                               random_seq(rng, 4, cfg.vocab_size)};
  const auto batch = TokenBatch::from_sequences(seqs);
  const std::vector<std::int32_t> labels{1, 4, 0};
  auto loss = [&] { return nn::add(lm_loss(model, batch), nn::cross_entropy(forward_classify(model, head, batch), labels)); };

  double worst = 0;
  std::uint64_t seed = 0;
  for (auto& np : model.named_parameters()) {
    const double err = nn::grad_check(loss, *np.tensor, 1e-4, 6, ++seed);
    INFO(np.name);
    CHECK(err < 1e-3);
    worst = std::max(worst, err);
  }
  CHECK(nn::grad_check(loss, head.weight, 1e-4, 6, 99) < 1e-3);
  CHECK(nn::grad_check(loss, head.bias, 1e-4) < 1e-3);
  MESSAGE("worst relative error " << worst);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::minutes(2));
}

TEST_CASE("masked objective gradients match finite differences") {
  auto model = DecoderModel<float>(tiny_config(false), 3).cast<double>();
  Rng rng(4);
  const std::vector<std::vector<TokenId>> seqs{random_seq(rng, 10, 270)};
  const auto batch = TokenBatch::from_sequences(seqs);
  std::vector<std::int32_t> targets(batch.batch * batch.time, nn::kIgnoreTarget);
  targets[2] = 7;
  targets[6] = 100;
  auto loss = [&] { return mlm_loss(model, batch, targets); };
  std::uint64_t seed = 0;
  for (auto& np : model.named_parameters()) CHECK(nn::grad_check(loss, *np.tensor, 1e-4, 3, ++seed) < 1e-3);
}

TEST_CASE("causal logits ignore future tokens") {
  DecoderModel<float> model(tiny_config(), 2);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 2 + rng.below(14);
    auto a = random_seq(rng, len, 270);
    const std::size_t t = rng.below(len - 1);
    auto b = a;
    for (std::size_t j = t + 1; j < len; ++j) b[j] = static_cast<TokenId>((b[j] + 1 + rng.below(200)) % 268);
    const std::vector<std::vector<TokenId>> sa{a}, sb{b};
    const auto la = forward_lm(model, TokenBatch::from_sequences(sa));
    const auto lb = forward_lm(model, TokenBatch::from_sequences(sb));
    for (std::size_t r = 0; r <= t; ++r) REQUIRE(row(la, r) == row(lb, r));
    REQUIRE(row(la, len - 1) != row(lb, len - 1));
  }
}

TEST_CASE("bidirectional trunk does see later tokens") {
  DecoderModel<float> model(tiny_config(false), 2);
  std::vector<std::vector<TokenId>> a{{5, 6, 7, 8}}, b{{5, 6, 7, 9}};
  CHECK(row(forward_lm(model, TokenBatch::from_sequences(a)), 0) !=
        row(forward_lm(model, TokenBatch::from_sequences(b)), 0));
}

TEST_CASE("classifier logits are pad- and batch-invariant") {
  const auto cfg = tiny_config();
  DecoderModel<float> model(cfg, 6);
  const auto head = ClassifierHead<float>::init(cfg.d_model, 5, 1);
  Rng rng(12);
  const auto target = random_seq(rng, 7, cfg.vocab_size);

  const std::vector<std::vector<TokenId>> alone{target};
  const auto base = forward_classify(model, head, TokenBatch::from_sequences(alone));
  const auto padded = forward_classify(model, head, TokenBatch::from_sequences(alone, Vocab::kPad, 16));
  CHECK(row(base, 0) == row(padded, 0));

  const std::vector<std::vector<TokenId>> mixed1{random_seq(rng, 3, 270), target, random_seq(rng, 15, 270)};
  const std::vector<std::vector<TokenId>> mixed2{target, random_seq(rng, 11, 270)};
  CHECK(row(forward_classify(model, head, TokenBatch::from_sequences(mixed1)), 1) == row(base, 0));
  CHECK(row(forward_classify(model, head, TokenBatch::from_sequences(mixed2)), 0) == row(base, 0));
}

TEST_CASE("pooling equals the trunk at the last real token followed by the head") {
  const auto cfg = tiny_config();
  DecoderModel<float> model(cfg, 6);
  const auto head = ClassifierHead<float>::init(cfg.d_model, 4, 2);
  Rng rng(1);
  const std::vector<std::vector<TokenId>> seqs{random_seq(rng, 5, 270), random_seq(rng, 9, 270)};
  const auto batch = TokenBatch::from_sequences(seqs);
  const auto h = model.hidden(batch);
  const auto logits = forward_classify(model, head, batch);
  const auto rows = pooling_rows(batch, true);
  CHECK(rows == std::vector<std::size_t>{4, batch.time + 8});
  CHECK(pooling_rows(batch, false) == std::vector<std::size_t>{0, batch.time});
  for (std::size_t b = 0; b < 2; ++b) {
    const auto hr = row(h, rows[b]);
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = head.bias.values()[c];
      for (std::size_t k = 0; k < cfg.d_model; ++k) acc += double(hr[k]) * head.weight.values()[k * 4 + c];
      CHECK(logits.values()[b * 4 + c] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("batch contract errors") {
  DecoderModel<float> model(tiny_config(), 1);
  const auto head = ClassifierHead<float>::init(16, 3, 1);
  const std::vector<std::vector<TokenId>> empty{{}};
  CHECK_THROWS_AS(forward_classify(model, head, TokenBatch::from_sequences(empty)), ContractError);
  const std::vector<std::vector<TokenId>> too_long{std::vector<TokenId>(17, 3)};
  CHECK_THROWS_AS(forward_lm(model, TokenBatch::from_sequences(too_long)), ContractError);
  const std::vector<std::vector<TokenId>> out_of_vocab{{3, 400}};
  CHECK_THROWS_AS(forward_lm(model, TokenBatch::from_sequences(out_of_vocab)), ContractError);
}

TEST_CASE("checkpoint round trip is byte-identical and restores the same function") {
  testing::ScratchDir dir("ckpt");
  const auto cfg = tiny_config();
  DecoderModel<float> model(cfg, 21);
  const auto head = ClassifierHead<float>::init(cfg.d_model, 3, 4);
  CheckpointFile f;
  f.config = cfg;
  f.step = 40;
  f.tokens_seen = 12345;
  f.vocab_hash = "abc";
  f.extra["max_len"] = 64;
  store_model(f, model);
  store_head(f, head);
  f.save(dir.path() / "a.ckpt");

  const auto g = CheckpointFile::load(dir.path() / "a.ckpt");
  g.save(dir.path() / "b.ckpt");
  CHECK(testing::read_file(dir.path() / "a.ckpt") == testing::read_file(dir.path() / "b.ckpt"));
  CHECK(g.config == cfg);
  CHECK(g.step == 40);
  CHECK(g.tokens_seen == 12345);
  CHECK(g.extra["max_len"] == 64);

  const auto model2 = restore_model(g);
  const auto head2 = restore_head(g);
  const std::vector<std::vector<TokenId>> seqs{{1, 2, 3, 4}, {9, 8}};
  const auto batch = TokenBatch::from_sequences(seqs);
  CHECK(std::ranges::equal(forward_classify(model, head, batch).values(),
                           forward_classify(model2, head2, batch).values()));

  CHECK_THROWS_AS(CheckpointFile::deserialize("garbage"), ContractError);
  auto bytes = f.serialize();
  bytes.resize(bytes.size() - 4);
  CHECK_THROWS_AS(CheckpointFile::deserialize(bytes), ContractError);
  CHECK_THROWS_AS(CheckpointFile::load(dir.path() / "missing.ckpt"), IoError);
}
