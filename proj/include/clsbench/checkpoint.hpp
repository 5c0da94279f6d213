// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//   "clsbench-checkpoint v1\n"
//   <manifest byte length>\n
//   <manifest JSON: config, step, tokens_seen, vocab_hash, extra, tensors[name, shape, offset]>
//   <little-endian float32 payload, tensors back to back in manifest order>
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "clsbench/model.hpp"
#include "json.hpp"

namespace clsbench {

struct TensorRecord {
  std::string name;
  nn::Shape shape;
  std::vector<float> values;
};

struct CheckpointFile {
  ModelConfig config;
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  std::string vocab_hash;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  std::string serialize() const;
  static CheckpointFile deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static CheckpointFile load(const std::filesystem::path& path);

  const TensorRecord* find(std::string_view name) const;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

/// Appends the model's parameters (names as in named_parameters()).
void store_model(CheckpointFile& file, const DecoderModel<float>& model);
DecoderModel<float> restore_model(const CheckpointFile& file);

/// Head tensors are stored as "head.weight" / "head.bias".
void store_head(CheckpointFile& file, const ClassifierHead<float>& head);
ClassifierHead<float> restore_head(const CheckpointFile& file);

}  // namespace clsbench
