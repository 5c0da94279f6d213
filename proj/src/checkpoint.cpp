// SPDX-License-Identifier: Apache-2.0
#include "clsbench/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "clsbench/csv.hpp"
#include "clsbench/errors.hpp"

namespace clsbench {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "clsbench-checkpoint v1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max-position-embeddings", c.context_length},
          {"causal", c.causal}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.context_length = j.at("max-position-embeddings").get<std::size_t>();
  c.causal = j.at("causal").get<bool>();
  c.validate();
  return c;
}

std::string CheckpointFile::serialize() const {
  json manifest;
  manifest["config"] = config_to_json(config);
  manifest["step"] = step;
  manifest["tokens_seen"] = tokens_seen;
  manifest["vocab_hash"] = vocab_hash;
  manifest["extra"] = extra;
  json list = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    require(nn::shape_size(t.shape) == t.values.size(), "checkpoint: tensor '" + t.name + "' shape mismatch");
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size() * sizeof(float);
  }
  manifest["tensors"] = list;
  const std::string head = manifest.dump();
  std::string out(kMagic);
  out += std::to_string(head.size());
  out += '\n';
  out += head;
  const std::size_t base = out.size();
  out.resize(base + offset);
  std::size_t pos = base;
  for (const auto& t : tensors) {
    std::memcpy(out.data() + pos, t.values.data(), t.values.size() * sizeof(float));
    pos += t.values.size() * sizeof(float);
  }
  return out;
}

CheckpointFile CheckpointFile::deserialize(std::string_view bytes) {
  require(bytes.substr(0, kMagic.size()) == kMagic, "checkpoint: bad magic");
  std::size_t pos = kMagic.size();
  const std::size_t nl = bytes.find('\n', pos);
  require(nl != std::string_view::npos, "checkpoint: missing manifest length");
  const std::size_t len = static_cast<std::size_t>(std::stoull(std::string(bytes.substr(pos, nl - pos))));
  pos = nl + 1;
  require(pos + len <= bytes.size(), "checkpoint: truncated manifest");
  CheckpointFile f;
  try {
    const json manifest = json::parse(bytes.substr(pos, len));
    pos += len;
    f.config = config_from_json(manifest.at("config"));
    f.step = manifest.at("step").get<std::uint64_t>();
    f.tokens_seen = manifest.at("tokens_seen").get<std::uint64_t>();
    f.vocab_hash = manifest.at("vocab_hash").get<std::string>();
    f.extra = manifest.at("extra");
    for (const auto& t : manifest.at("tensors")) {
      TensorRecord rec;
      rec.name = t.at("name").get<std::string>();
      rec.shape = t.at("shape").get<nn::Shape>();
      const auto off = t.at("offset").get<std::uint64_t>();
      const std::size_t n = nn::shape_size(rec.shape);
      require(pos + off + n * sizeof(float) <= bytes.size(), "checkpoint: truncated payload for " + rec.name);
      rec.values.resize(n);
      std::memcpy(rec.values.data(), bytes.data() + pos + off, n * sizeof(float));
      f.tensors.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint manifest: ") + e.what());
  }
  return f;
}

void CheckpointFile::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

CheckpointFile CheckpointFile::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

const TensorRecord* CheckpointFile::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void store_model(CheckpointFile& file, const DecoderModel<float>& model) {
  file.config = model.config();
  for (const auto& [name, t] : model.named_parameters()) {
    file.tensors.push_back({name, t->shape(), std::vector<float>(t->values().begin(), t->values().end())});
  }
}

DecoderModel<float> restore_model(const CheckpointFile& file) {
  DecoderModel<float> model = DecoderModel<float>::zeros(file.config);
  for (auto& np : model.named_parameters()) {
    const TensorRecord* rec = file.find(np.name);
    require(rec != nullptr, "checkpoint: missing tensor " + np.name);
    require(rec->shape == np.tensor->shape(), "checkpoint: shape mismatch for " + np.name);
    std::copy(rec->values.begin(), rec->values.end(), np.tensor->mutable_values().begin());
  }
  return model;
}

void store_head(CheckpointFile& file, const ClassifierHead<float>& head) {
  file.tensors.push_back({"head.weight", head.weight.shape(),
                          std::vector<float>(head.weight.values().begin(), head.weight.values().end())});
  file.tensors.push_back(
      {"head.bias", head.bias.shape(), std::vector<float>(head.bias.values().begin(), head.bias.values().end())});
}

ClassifierHead<float> restore_head(const CheckpointFile& file) {
  const TensorRecord* w = file.find("head.weight");
  const TensorRecord* b = file.find("head.bias");
  require(w && b, "checkpoint: no classifier head");
  require(w->shape.size() == 2 && w->shape[0] == file.config.d_model && b->values.size() == w->shape[1],
          "checkpoint: classifier head shape mismatch");
  return {nn::Tensor<float>::parameter(w->shape, w->values), nn::Tensor<float>::parameter(b->shape, b->values)};
}

}  // namespace clsbench
