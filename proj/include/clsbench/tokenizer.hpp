// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clsbench {

using TokenId = std::int32_t;

/// Byte-level BPE vocabulary. Ids 0..255 are raw bytes, 256 is end-of-text,
/// 257 is pad, and merge products follow in rank order.
class Vocab {
 public:
  static constexpr TokenId kEndOfText = 256;
  static constexpr TokenId kPad = 257;
  static constexpr std::size_t kBaseSize = 258;

  Vocab();

  std::size_t size() const { return token_bytes_.size(); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  const std::string& token_bytes(TokenId id) const;
  bool is_special(TokenId id) const { return id == kEndOfText || id == kPad; }

  /// Appends a merge rule; the new token gets id size().
  TokenId add_merge(TokenId left, TokenId right);

  /// Merge rank of a pair, or -1 when the pair never merges.
  std::int64_t rank(TokenId left, TokenId right) const;

  std::string serialize() const;
  static Vocab deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  /// FNV-1a of the serialized form, hex encoded.
  std::string hash() const;

 private:
  std::vector<std::string> token_bytes_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::pair<TokenId, TokenId>, std::int64_t> ranks_;
};

/// Splits text into merge-isolated chunks: an optional leading space followed
/// by a run of letters, a run of digits, a run of other non-space bytes, or a
/// whitespace run. Merges never cross chunk boundaries.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Learns vocab_size - 258 merges, most frequent pair first (ties go to the
/// lexicographically smallest id pair).
Vocab train_bpe(std::string_view corpus, std::size_t vocab_size);

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab);
std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab);

}  // namespace clsbench
