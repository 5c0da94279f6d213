// SPDX-License-Identifier: Apache-2.0
#include "clsbench/model.hpp"

#include <algorithm>
#include <cmath>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench {

using nn::Tensor;

void ModelConfig::validate() const {
  require(n_layers >= 1, "model: n_layers must be positive");
  require(n_heads >= 1, "model: n_heads must be positive");
  require(d_model % n_heads == 0, "model: d_model must be divisible by n_heads");
  require(d_ff >= 1, "model: d_ff must be positive");
  require(vocab_size >= Vocab::kBaseSize, "model: vocab_size below 258");
  require(context_length >= 1, "model: context_length must be positive");
}

std::vector<std::string> preset_names() { return {"nano", "micro", "mini"}; }

Preset family_preset(std::string_view name, std::size_t vocab_size, std::size_t context_length) {
  // Width/depth grow together as in the Pythia ladder; peak lr is Table-1
  // style (3e-4 / 2e-4 / 1.6e-4) scaled 10x for models this small.
  Preset p;
  p.name = std::string(name);
  p.config.vocab_size = vocab_size;
  p.config.context_length = context_length;
  p.config.causal = true;
  if (name == "nano") {
    p.config.n_layers = 2;
    p.config.n_heads = 2;
    p.config.d_model = 32;
    p.lr_peak = 3e-3;
  } else if (name == "micro") {
    p.config.n_layers = 3;
    p.config.n_heads = 4;
    p.config.d_model = 64;
    p.lr_peak = 2e-3;
  } else if (name == "mini") {
    p.config.n_layers = 4;
    p.config.n_heads = 4;
    p.config.d_model = 112;
    p.lr_peak = 1.6e-3;
  } else {
    throw ContractError("unknown model preset '" + std::string(name) + "'");
  }
  p.config.d_ff = 4 * p.config.d_model;
  p.config.validate();
  return p;
}

std::uint64_t count_params(const ModelConfig& c) {
  const std::uint64_t d = c.d_model, f = c.d_ff, v = c.vocab_size;
  const std::uint64_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  return v * d + c.context_length * d + c.n_layers * block + 2 * d + d * v;
}

double flops_for_tokens(const ModelConfig& config, std::uint64_t n_tokens) {
  return 6.0 * static_cast<double>(count_params(config)) * static_cast<double>(n_tokens);
}

TokenBatch TokenBatch::from_sequences(std::span<const std::vector<TokenId>> seqs, TokenId pad, std::size_t pad_to) {
  require(!seqs.empty(), "token batch: no sequences");
  TokenBatch b;
  b.batch = seqs.size();
  b.time = pad_to;
  for (const auto& s : seqs) {
    require(!s.empty(), "token batch: zero-length sequence");
    b.time = std::max(b.time, s.size());
  }
  b.ids.assign(b.batch * b.time, pad);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::copy(seqs[i].begin(), seqs[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.time));
    b.lengths.push_back(seqs[i].size());
  }
  return b;
}

namespace {

template <typename T>
Tensor<T> normal_param(nn::Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(nn::shape_size(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>::parameter(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> const_param(nn::Shape shape, T value) {
  return Tensor<T>::parameter(shape, std::vector<T>(nn::shape_size(shape), value));
}

template <typename T, typename U>
Tensor<U> cast_tensor(const Tensor<T>& t) {
  std::vector<U> v(t.values().begin(), t.values().end());
  auto out = Tensor<U>::parameter(t.shape(), std::move(v));
  return out;
}

}  // namespace

template <typename T>
DecoderModel<T>::DecoderModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model, f = config_.d_ff;
  const double std0 = 0.02;
  const double std_resid = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.n_layers));
  token_embedding_ = normal_param<T>({config_.vocab_size, d}, std0, rng);
  position_embedding_ = normal_param<T>({config_.context_length, d}, std0, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Block b;
    b.ln1_gain = const_param<T>({d}, T(1));
    b.ln1_bias = const_param<T>({d}, T(0));
    b.qkv_weight = normal_param<T>({d, 3 * d}, std0, rng);
    b.qkv_bias = const_param<T>({3 * d}, T(0));
    b.out_weight = normal_param<T>({d, d}, std_resid, rng);
    b.out_bias = const_param<T>({d}, T(0));
    b.ln2_gain = const_param<T>({d}, T(1));
    b.ln2_bias = const_param<T>({d}, T(0));
    b.fc_weight = normal_param<T>({d, f}, std0, rng);
    b.fc_bias = const_param<T>({f}, T(0));
    b.proj_weight = normal_param<T>({f, d}, std_resid, rng);
    b.proj_bias = const_param<T>({d}, T(0));
    blocks_.push_back(std::move(b));
  }
  lnf_gain_ = const_param<T>({d}, T(1));
  lnf_bias_ = const_param<T>({d}, T(0));
  lm_head_ = normal_param<T>({d, config_.vocab_size}, std0, rng);
}

template <typename T>
DecoderModel<T> DecoderModel<T>::zeros(const ModelConfig& config) {
  DecoderModel m(config, 0);
  for (auto* p : m.parameters()) std::fill(p->mutable_values().begin(), p->mutable_values().end(), T(0));
  return m;
}

template <typename T>
std::vector<NamedParam<T>> DecoderModel<T>::named_parameters() {
  std::vector<NamedParam<T>> out;
  out.push_back({"embed.token", &token_embedding_});
  out.push_back({"embed.position", &position_embedding_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    auto& b = blocks_[l];
    out.push_back({p + "ln1.gain", &b.ln1_gain});
    out.push_back({p + "ln1.bias", &b.ln1_bias});
    out.push_back({p + "attn.qkv.weight", &b.qkv_weight});
    out.push_back({p + "attn.qkv.bias", &b.qkv_bias});
    out.push_back({p + "attn.out.weight", &b.out_weight});
    out.push_back({p + "attn.out.bias", &b.out_bias});
    out.push_back({p + "ln2.gain", &b.ln2_gain});
    out.push_back({p + "ln2.bias", &b.ln2_bias});
    out.push_back({p + "mlp.fc.weight", &b.fc_weight});
    out.push_back({p + "mlp.fc.bias", &b.fc_bias});
    out.push_back({p + "mlp.proj.weight", &b.proj_weight});
    out.push_back({p + "mlp.proj.bias", &b.proj_bias});
  }
  out.push_back({"lnf.gain", &lnf_gain_});
  out.push_back({"lnf.bias", &lnf_bias_});
  out.push_back({"lm_head.weight", &lm_head_});
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> DecoderModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& np : const_cast<DecoderModel*>(this)->named_parameters()) out.emplace_back(np.name, np.tensor);
  return out;
}

template <typename T>
std::vector<Tensor<T>*> DecoderModel<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (const auto& np : named_parameters()) out.push_back(np.tensor);
  return out;
}

template <typename T>
DecoderModel<T> DecoderModel<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
DecoderModel<U> DecoderModel<T>::cast() const {
  DecoderModel<U> out(config_);
  out.token_embedding_ = cast_tensor<T, U>(token_embedding_);
  out.position_embedding_ = cast_tensor<T, U>(position_embedding_);
  for (const auto& b : blocks_) {
    typename DecoderModel<U>::Block nb;
    nb.ln1_gain = cast_tensor<T, U>(b.ln1_gain);
    nb.ln1_bias = cast_tensor<T, U>(b.ln1_bias);
    nb.qkv_weight = cast_tensor<T, U>(b.qkv_weight);
    nb.qkv_bias = cast_tensor<T, U>(b.qkv_bias);
    nb.out_weight = cast_tensor<T, U>(b.out_weight);
    nb.out_bias = cast_tensor<T, U>(b.out_bias);
    nb.ln2_gain = cast_tensor<T, U>(b.ln2_gain);
    nb.ln2_bias = cast_tensor<T, U>(b.ln2_bias);
    nb.fc_weight = cast_tensor<T, U>(b.fc_weight);
    nb.fc_bias = cast_tensor<T, U>(b.fc_bias);
    nb.proj_weight = cast_tensor<T, U>(b.proj_weight);
    nb.proj_bias = cast_tensor<T, U>(b.proj_bias);
    out.blocks_.push_back(std::move(nb));
  }
  out.lnf_gain_ = cast_tensor<T, U>(lnf_gain_);
  out.lnf_bias_ = cast_tensor<T, U>(lnf_bias_);
  out.lm_head_ = cast_tensor<T, U>(lm_head_);
  return out;
}

template <typename T>
Tensor<T> DecoderModel<T>::hidden(const TokenBatch& batch) const {
  require(batch.batch >= 1 && batch.time >= 1, "forward: empty batch");
  require(batch.ids.size() == batch.batch * batch.time, "forward: ids do not match batch shape");
  require(batch.time <= config_.context_length, "forward: sequence longer than context_length");
  for (auto id : batch.ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < config_.vocab_size, "forward: token id outside vocab");
  }
  for (auto len : batch.lengths) require(len >= 1 && len <= batch.time, "forward: bad sequence length");

  std::vector<std::int32_t> positions(batch.batch * batch.time);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % batch.time);
  Tensor<T> x = nn::add(nn::embedding(token_embedding_, batch.ids), nn::embedding(position_embedding_, positions));

  nn::AttentionLayout layout;
  layout.batch = batch.batch;
  layout.time = batch.time;
  layout.heads = config_.n_heads;
  layout.causal = config_.causal;
  if (!config_.causal) layout.lengths = batch.lengths;

  for (const auto& b : blocks_) {
    Tensor<T> h = nn::layer_norm(x, b.ln1_gain, b.ln1_bias);
    Tensor<T> qkv = nn::linear(h, b.qkv_weight, b.qkv_bias);
    Tensor<T> att = nn::attention(qkv, layout);
    x = nn::add(x, nn::linear(att, b.out_weight, b.out_bias));
    h = nn::layer_norm(x, b.ln2_gain, b.ln2_bias);
    h = nn::gelu(nn::linear(h, b.fc_weight, b.fc_bias));
    x = nn::add(x, nn::linear(h, b.proj_weight, b.proj_bias));
  }
  return nn::layer_norm(x, lnf_gain_, lnf_bias_);
}

template <typename T>
Tensor<T> DecoderModel<T>::lm_head(const Tensor<T>& hidden_states) const {
  return nn::matmul(hidden_states, lm_head_);
}

template <typename T>
Tensor<T> forward_lm(const DecoderModel<T>& model, const TokenBatch& batch) {
  return model.lm_head(model.hidden(batch));
}

template <typename T>
Tensor<T> lm_loss(const DecoderModel<T>& model, const TokenBatch& batch) {
  std::vector<std::int32_t> targets(batch.batch * batch.time, nn::kIgnoreTarget);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const std::size_t len = batch.lengths.empty() ? batch.time : batch.lengths[b];
    for (std::size_t t = 0; t + 1 < len; ++t) targets[b * batch.time + t] = batch.ids[b * batch.time + t + 1];
  }
  return nn::cross_entropy(forward_lm(model, batch), targets);
}

template <typename T>
Tensor<T> mlm_loss(const DecoderModel<T>& model, const TokenBatch& batch, std::span<const std::int32_t> targets) {
  return nn::cross_entropy(forward_lm(model, batch), targets);
}

template <typename T>
ClassifierHead<T> ClassifierHead<T>::init(std::size_t d_model, std::size_t n_classes, std::uint64_t seed) {
  require(n_classes >= 1, "classifier head: at least one class required");
  Rng rng(seed);
  return {normal_param<T>({d_model, n_classes}, 0.02, rng), const_param<T>({n_classes}, T(0))};
}

template <typename T>
template <typename U>
ClassifierHead<U> ClassifierHead<T>::cast() const {
  return {cast_tensor<T, U>(weight), cast_tensor<T, U>(bias)};
}

std::vector<std::size_t> pooling_rows(const TokenBatch& batch, bool causal) {
  std::vector<std::size_t> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const std::size_t len = batch.lengths.empty() ? batch.time : batch.lengths[b];
    require(len >= 1, "classify: zero-length sequence");
    rows[b] = b * batch.time + (causal ? len - 1 : 0);
  }
  return rows;
}

template <typename T>
Tensor<T> forward_classify(const DecoderModel<T>& model, const ClassifierHead<T>& head, const TokenBatch& batch) {
  require(head.weight.dim(0) == model.config().d_model, "classify: head width does not match d_model");
  for (auto len : batch.lengths) require(len >= 1, "classify: zero-length sequence");
  const auto rows = pooling_rows(batch, model.config().causal);
  Tensor<T> pooled = nn::gather_rows(model.hidden(batch), rows);
  return nn::linear(pooled, head.weight, head.bias);
}

template class DecoderModel<float>;
template class DecoderModel<double>;
template DecoderModel<double> DecoderModel<float>::cast<double>() const;
template DecoderModel<float> DecoderModel<double>::cast<float>() const;
template struct ClassifierHead<float>;
template struct ClassifierHead<double>;
template ClassifierHead<double> ClassifierHead<float>::cast<double>() const;
template ClassifierHead<float> ClassifierHead<double>::cast<float>() const;
template Tensor<float> forward_lm(const DecoderModel<float>&, const TokenBatch&);
template Tensor<double> forward_lm(const DecoderModel<double>&, const TokenBatch&);
template Tensor<float> lm_loss(const DecoderModel<float>&, const TokenBatch&);
template Tensor<double> lm_loss(const DecoderModel<double>&, const TokenBatch&);
template Tensor<float> mlm_loss(const DecoderModel<float>&, const TokenBatch&, std::span<const std::int32_t>);
template Tensor<double> mlm_loss(const DecoderModel<double>&, const TokenBatch&, std::span<const std::int32_t>);
template Tensor<float> forward_classify(const DecoderModel<float>&, const ClassifierHead<float>&, const TokenBatch&);
template Tensor<double> forward_classify(const DecoderModel<double>&, const ClassifierHead<double>&,
                                         const TokenBatch&);

}  // namespace clsbench
