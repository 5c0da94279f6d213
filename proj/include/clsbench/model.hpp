// SPDX-License-Identifier: Apache-2.0
//
// GPT-style decoder family: learned token and absolute position embeddings,
// pre-norm blocks (attention + GELU MLP, sequential residuals), a final layer
// norm, and an untied language-model head. The same trunk serves the masked
// baseline when config.causal is false.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clsbench/tensor.hpp"
#include "clsbench/tokenizer.hpp"

namespace clsbench {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 512;
  /// Max position embeddings.
  std::size_t context_length = 256;
  bool causal = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Preset {
  std::string name;
  ModelConfig config;
  double lr_peak = 3e-3;
};

/// nano / micro / mini: ~3-4x parameter spacing, peak lr falling with size.
Preset family_preset(std::string_view name, std::size_t vocab_size, std::size_t context_length);
std::vector<std::string> preset_names();

std::uint64_t count_params(const ModelConfig& config);

/// 6 * N * tokens.
double flops_for_tokens(const ModelConfig& config, std::uint64_t n_tokens);

/// Right-padded batch of token sequences.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::vector<TokenId> ids;
  std::vector<std::size_t> lengths;

  /// Pads to the longest sequence (or to pad_to when larger).
  static TokenBatch from_sequences(std::span<const std::vector<TokenId>> seqs, TokenId pad = Vocab::kPad,
                                   std::size_t pad_to = 0);
};

template <typename T>
struct NamedParam {
  std::string name;
  nn::Tensor<T>* tensor;
};

template <typename T>
class DecoderModel {
 public:
  struct Block {
    nn::Tensor<T> ln1_gain, ln1_bias;
    nn::Tensor<T> qkv_weight, qkv_bias;
    nn::Tensor<T> out_weight, out_bias;
    nn::Tensor<T> ln2_gain, ln2_bias;
    nn::Tensor<T> fc_weight, fc_bias;
    nn::Tensor<T> proj_weight, proj_bias;
  };

  /// Normal(0, 0.02) weights (residual projections scaled by 1/sqrt(2 L)),
  /// unit layer-norm gains, zero biases.
  DecoderModel(const ModelConfig& config, std::uint64_t seed);

  /// Every parameter zero, including layer-norm gains.
  static DecoderModel zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParam<T>> named_parameters();
  std::vector<std::pair<std::string, const nn::Tensor<T>*>> named_parameters() const;
  std::vector<nn::Tensor<T>*> parameters();

  DecoderModel clone() const;

  template <typename U>
  DecoderModel<U> cast() const;

  /// Final-layer-norm hidden states, [batch*time, d_model].
  nn::Tensor<T> hidden(const TokenBatch& batch) const;

  /// Applies the LM head to hidden states.
  nn::Tensor<T> lm_head(const nn::Tensor<T>& hidden_states) const;

 private:
  template <typename>
  friend class DecoderModel;
  explicit DecoderModel(const ModelConfig& config) : config_(config) {}

  ModelConfig config_;
  nn::Tensor<T> token_embedding_;
  nn::Tensor<T> position_embedding_;
  std::vector<Block> blocks_;
  nn::Tensor<T> lnf_gain_, lnf_bias_;
  nn::Tensor<T> lm_head_;
};

/// LM logits, [batch*time, vocab].
template <typename T>
nn::Tensor<T> forward_lm(const DecoderModel<T>& model, const TokenBatch& batch);

/// Next-token cross-entropy over real (non-pad) positions.
template <typename T>
nn::Tensor<T> lm_loss(const DecoderModel<T>& model, const TokenBatch& batch);

/// Masked-token cross-entropy; targets hold kIgnoreTarget except at masked
/// positions (flattened batch*time).
template <typename T>
nn::Tensor<T> mlm_loss(const DecoderModel<T>& model, const TokenBatch& batch, std::span<const std::int32_t> targets);

template <typename T>
struct ClassifierHead {
  nn::Tensor<T> weight;  // [d_model, n_classes]
  nn::Tensor<T> bias;    // [n_classes]

  /// Normal(0, 0.02) weight, zero bias.
  static ClassifierHead init(std::size_t d_model, std::size_t n_classes, std::uint64_t seed);
  std::size_t n_classes() const { return bias.size(); }
  ClassifierHead clone() const { return {weight.clone(), bias.clone()}; }
  template <typename U>
  ClassifierHead<U> cast() const;
};

/// Row index in [batch*time] whose hidden state is pooled: the last real
/// token for causal models, the first token for the masked baseline.
std::vector<std::size_t> pooling_rows(const TokenBatch& batch, bool causal);

/// Class logits [batch, n_classes] from the pooled hidden state.
template <typename T>
nn::Tensor<T> forward_classify(const DecoderModel<T>& model, const ClassifierHead<T>& head, const TokenBatch& batch);

}  // namespace clsbench
