// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clsbench/tokenizer.hpp"

namespace clsbench {

enum class Role { customer, system, advocate };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct Message {
  Role role = Role::customer;
  std::string text;
  /// Present only on advocate turns that used a template.
  std::optional<int> template_id;
};

struct Transcript {
  std::string case_id;
  std::vector<Message> messages;
  /// Generator label; diagnostics only.
  int intent = -1;
};

struct TemplateCatalog {
  std::vector<std::string> texts;

  std::size_t size() const { return texts.size(); }

  /// Catalog whose texts mention the keywords of the intent that owns them.
  static TemplateCatalog synthetic(std::size_t n_classes);
  void save_csv(const std::filesystem::path& path) const;
  static TemplateCatalog load_csv(const std::filesystem::path& path);
};

/// Vocabulary layout of the synthetic support domain. Intent i owns templates
/// 2i ("ask for details") and 2i+1 ("resolved"). Intents are grouped in eights
/// and each group shares a pool of keywords; ambiguity is the probability that
/// a keyword slot draws from the group pool instead of the intent's own words.
struct SyntheticGrammar {
  static constexpr std::size_t kKeywordsPerIntent = 3;
  static constexpr std::size_t kGroupSize = 8;

  static std::size_t intent_count(std::size_t n_classes) { return (n_classes + 1) / 2; }
  static std::vector<std::string> intent_keywords(std::size_t intent);
  static std::vector<std::string> group_keywords(std::size_t n_classes, std::size_t group);
  static std::string word(std::size_t index);
};

/// Deterministic in (seed, n_cases, catalog size, ambiguity).
std::vector<Transcript> generate_corpus(std::uint64_t seed, std::size_t n_cases, const TemplateCatalog& catalog,
                                        double ambiguity);

void save_transcripts(const std::filesystem::path& path, std::span<const Transcript> transcripts);
std::vector<Transcript> load_transcripts(const std::filesystem::path& path);

/// "<ROLE>: text" per message, newline-joined.
std::string format_pretraining(const Transcript& t);

using PretrainSequence = std::vector<TokenId>;

/// doc1 EOT doc2 EOT ... sliced into full windows; the ragged tail is dropped.
std::vector<PretrainSequence> pack_sequences(std::span<const std::vector<TokenId>> docs,
                                             std::size_t context_length,
                                             TokenId end_of_text = Vocab::kEndOfText);

struct ClassificationExample {
  std::vector<TokenId> token_ids;
  int label = 0;
  std::string case_id;
};

/// Earliest-first truncation shared by training and serving: keeps the newest
/// whole messages (prefix-free, single-space joined) that fit in max_len; a
/// lone oversized message keeps its last max_len tokens.
std::vector<TokenId> truncate_context(std::span<const std::string> texts, std::size_t max_len, const Vocab& vocab);

ClassificationExample build_classification_example(const Transcript& t, std::size_t reply_index,
                                                   std::size_t max_len, const Vocab& vocab);

/// One example per template-bearing advocate message that has prior context.
std::vector<ClassificationExample> build_classification_set(std::span<const Transcript> transcripts,
                                                            std::size_t max_len, const Vocab& vocab);

/// Case-level split keyed on hash(seed, case_id).
std::pair<std::vector<ClassificationExample>, std::vector<ClassificationExample>> split_by_case(
    std::span<const ClassificationExample> examples, double train_fraction, std::uint64_t seed);

bool in_train_fold(std::string_view case_id, double train_fraction, std::uint64_t seed);

struct MaskedSequence {
  std::vector<TokenId> token_ids;
  /// Ascending masked positions.
  std::vector<std::size_t> positions;
  /// Original ids at positions.
  std::vector<TokenId> targets;
};

/// Masks round(rate * len) positions (at least one) chosen uniformly without
/// replacement.
MaskedSequence mask_tokens(std::span<const TokenId> seq, double mask_rate, std::uint64_t seed, TokenId mask_id);

}  // namespace clsbench
