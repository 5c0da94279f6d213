// SPDX-License-Identifier: Apache-2.0
#include "clsbench/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench {

namespace {

constexpr std::string_view kHeader = "clsbench-bpe v1";

struct PairHash {
  std::size_t operator()(const std::pair<TokenId, TokenId>& p) const {
    return (static_cast<std::size_t>(static_cast<std::uint32_t>(p.first)) << 32) ^
           static_cast<std::uint32_t>(p.second);
  }
};

enum class ByteClass { letter, digit, space, other };

ByteClass classify(unsigned char c) {
  if (std::isalpha(c) || c >= 0x80) return ByteClass::letter;
  if (std::isdigit(c)) return ByteClass::digit;
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return ByteClass::space;
  return ByteClass::other;
}

std::vector<TokenId> bytes_of(std::string_view chunk) {
  std::vector<TokenId> out;
  out.reserve(chunk.size());
  for (unsigned char c : chunk) out.push_back(c);
  return out;
}

void apply_merges(std::vector<TokenId>& word, const Vocab& vocab) {
  while (word.size() > 1) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      const auto r = vocab.rank(word[i], word[i + 1]);
      if (r >= 0 && r < best) best = r;
    }
    if (best == std::numeric_limits<std::int64_t>::max()) break;
    const TokenId merged = static_cast<TokenId>(Vocab::kBaseSize + best);
    // Merge every occurrence of this pair left to right.
    const auto [l, r] = vocab.merges()[static_cast<std::size_t>(best)];
    std::vector<TokenId> next;
    next.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == l && word[i + 1] == r) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(word[i++]);
      }
    }
    word.swap(next);
  }
}

}  // namespace

Vocab::Vocab() {
  token_bytes_.reserve(kBaseSize);
  for (int b = 0; b < 256; ++b) token_bytes_.emplace_back(1, static_cast<char>(b));
  token_bytes_.emplace_back("<|endoftext|>");
  token_bytes_.emplace_back("<|pad|>");
}

const std::string& Vocab::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= token_bytes_.size()) {
    throw ContractError("vocab: unknown token id " + std::to_string(id));
  }
  return token_bytes_[static_cast<std::size_t>(id)];
}

TokenId Vocab::add_merge(TokenId left, TokenId right) {
  require(!is_special(left) && !is_special(right), "vocab: specials cannot be merged");
  token_bytes(left);
  token_bytes(right);
  require(!ranks_.contains({left, right}), "vocab: duplicate merge");
  const auto id = static_cast<TokenId>(token_bytes_.size());
  ranks_[{left, right}] = static_cast<std::int64_t>(merges_.size());
  merges_.emplace_back(left, right);
  token_bytes_.push_back(token_bytes_[left] + token_bytes_[right]);
  return id;
}

std::int64_t Vocab::rank(TokenId left, TokenId right) const {
  auto it = ranks_.find({left, right});
  return it == ranks_.end() ? -1 : it->second;
}

std::string Vocab::serialize() const {
  std::ostringstream os;
  os << kHeader << "\n";
  os << "specials end_of_text=" << kEndOfText << " pad=" << kPad << "\n";
  os << "merges " << merges_.size() << "\n";
  for (const auto& [l, r] : merges_) os << l << " " << r << "\n";
  return os.str();
}

Vocab Vocab::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw ContractError("vocab: bad header");
  if (!std::getline(is, line) ||
      line != "specials end_of_text=" + std::to_string(kEndOfText) + " pad=" + std::to_string(kPad)) {
    throw ContractError("vocab: bad specials manifest");
  }
  std::string word;
  std::size_t n = 0;
  if (!(is >> word >> n) || word != "merges") throw ContractError("vocab: missing merge count");
  Vocab v;
  for (std::size_t i = 0; i < n; ++i) {
    TokenId l = 0, r = 0;
    if (!(is >> l >> r)) throw ContractError("vocab: truncated merge list");
    v.add_merge(l, r);
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed for " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

std::string Vocab::hash() const {
  std::ostringstream os;
  os << std::hex << fnv1a(serialize());
  return os.str();
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    auto cls = classify(static_cast<unsigned char>(text[i]));
    if (text[i] == ' ' && i + 1 < text.size()) {
      auto next = classify(static_cast<unsigned char>(text[i + 1]));
      if (next != ByteClass::space) {
        // A single space glues onto the following run.
        ++i;
        cls = next;
      }
    }
    while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
    // A whitespace run leaves its final space to the word that follows.
    if (cls == ByteClass::space && i < text.size() && i - start > 1 && text[i - 1] == ' ') --i;
    if (i == start) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

Vocab train_bpe(std::string_view corpus, std::size_t vocab_size) {
  require(!corpus.empty(), "train_bpe: empty corpus");
  require(vocab_size >= Vocab::kBaseSize, "train_bpe: vocab_size must be at least 258");

  std::unordered_map<std::string_view, std::uint64_t> freq;
  for (auto chunk : pretokenize(corpus)) ++freq[chunk];
  // Sort unique chunks so pair counting is order-independent.
  std::vector<std::pair<std::string_view, std::uint64_t>> uniq(freq.begin(), freq.end());
  std::sort(uniq.begin(), uniq.end());
  std::vector<std::vector<TokenId>> words;
  std::vector<std::uint64_t> counts;
  for (const auto& [w, c] : uniq) {
    words.push_back(bytes_of(w));
    counts.push_back(c);
  }

  Vocab vocab;
  while (vocab.size() < vocab_size) {
    std::unordered_map<std::pair<TokenId, TokenId>, std::uint64_t, PairHash> pairs;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& ids = words[w];
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) pairs[{ids[i], ids[i + 1]}] += counts[w];
    }
    if (pairs.empty()) {
      throw ContractError("train_bpe: corpus has too few distinct pairs to reach vocab_size " +
                          std::to_string(vocab_size));
    }
    std::pair<TokenId, TokenId> best{};
    std::uint64_t best_count = 0;
    for (const auto& [p, c] : pairs) {
      if (c > best_count || (c == best_count && p < best)) {
        best = p;
        best_count = c;
      }
    }
    const TokenId merged = vocab.add_merge(best.first, best.second);
    for (auto& ids : words) {
      if (ids.size() < 2) continue;
      std::vector<TokenId> next;
      next.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size();) {
        if (i + 1 < ids.size() && ids[i] == best.first && ids[i + 1] == best.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(ids[i++]);
        }
      }
      ids.swap(next);
    }
  }
  return vocab;
}

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> out;
  for (auto chunk : pretokenize(text)) {
    auto word = bytes_of(chunk);
    apply_merges(word, vocab);
    out.insert(out.end(), word.begin(), word.end());
  }
  return out;
}

std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) out += vocab.token_bytes(id);
  return out;
}

}  // namespace clsbench
