// SPDX-License-Identifier: Apache-2.0
#include "clsbench/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "clsbench/csv.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::customer: return "CUSTOMER";
    case Role::system: return "SYSTEM";
    case Role::advocate: return "ADVOCATE";
  }
  return "CUSTOMER";
}

Role parse_role(std::string_view name) {
  if (name == "CUSTOMER") return Role::customer;
  if (name == "SYSTEM") return Role::system;
  if (name == "ADVOCATE") return Role::advocate;
  throw ContractError("unknown role '" + std::string(name) + "'");
}

// ---- synthetic domain ---------------------------------------------------------

std::string SyntheticGrammar::word(std::size_t index) {
  static const std::vector<std::string> words = [] {
    constexpr std::string_view consonants = "bdfgklmnprstvz";
    constexpr std::string_view vowels = "aeiou";
    std::vector<std::string> syl;
    for (char c : consonants) {
      for (char v : vowels) syl.push_back(std::string{c, v});
    }
    std::vector<std::string> all;
    for (const auto& a : syl) {
      for (const auto& b : syl) all.push_back(a + b);
    }
    Rng rng(0x5eed);
    for (std::size_t i = all.size() - 1; i > 0; --i) std::swap(all[i], all[rng.below(i + 1)]);
    return all;
  }();
  require(index < words.size(), "synthetic grammar: word index exhausted");
  return words[index];
}

std::vector<std::string> SyntheticGrammar::intent_keywords(std::size_t intent) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < kKeywordsPerIntent; ++k) out.push_back(word(intent * kKeywordsPerIntent + k));
  return out;
}

std::vector<std::string> SyntheticGrammar::group_keywords(std::size_t n_classes, std::size_t group) {
  const std::size_t base = intent_count(n_classes) * kKeywordsPerIntent;
  std::vector<std::string> out;
  for (std::size_t k = 0; k < kKeywordsPerIntent; ++k) out.push_back(word(base + group * kKeywordsPerIntent + k));
  return out;
}

TemplateCatalog TemplateCatalog::synthetic(std::size_t n_classes) {
  require(n_classes >= 1, "catalog: at least one template required");
  TemplateCatalog cat;
  for (std::size_t id = 0; id < n_classes; ++id) {
    const auto kw = SyntheticGrammar::intent_keywords(id / 2);
    if (id % 2 == 0) {
      cat.texts.push_back("I can look into your " + kw[0] + " " + kw[1] +
                          " right away. Could you share more details about the " + kw[2] + "?");
    } else {
      cat.texts.push_back("All set, your " + kw[0] + " " + kw[2] + " has been updated. Anything else about the " +
                          kw[1] + "?");
    }
  }
  return cat;
}

void TemplateCatalog::save_csv(const std::filesystem::path& path) const {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"id", "text"});
  for (std::size_t i = 0; i < texts.size(); ++i) rows.push_back({std::to_string(i), texts[i]});
  write_csv(path, rows);
}

TemplateCatalog TemplateCatalog::load_csv(const std::filesystem::path& path) {
  auto rows = read_csv(path);
  require(!rows.empty() && rows[0] == std::vector<std::string>{"id", "text"}, "catalog: expected header id,text");
  TemplateCatalog cat;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    require(rows[r].size() == 2, "catalog: expected two columns");
    require(rows[r][0] == std::to_string(r - 1), "catalog: ids must be dense and ordered");
    cat.texts.push_back(rows[r][1]);
  }
  require(!cat.texts.empty(), "catalog: empty");
  return cat;
}

namespace {

constexpr std::string_view kSystemGreeting =
    "Hi <NAME>, I'll get you to someone who can help. You don't have to wait. We'll notify you when they reply.";

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& options) {
  return options[rng.below(N)];
}

std::string fill(std::string_view pattern, const std::function<std::string()>& slot) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '@') {
      out += slot();
    } else {
      out += pattern[i];
    }
  }
  return out;
}

}  // namespace

std::vector<Transcript> generate_corpus(std::uint64_t seed, std::size_t n_cases, const TemplateCatalog& catalog,
                                        double ambiguity) {
  require(n_cases >= 1, "generate_corpus: n_cases must be positive");
  require(catalog.size() >= 1, "generate_corpus: empty catalog");
  require(ambiguity >= 0 && ambiguity <= 1, "generate_corpus: ambiguity outside [0,1]");

  static constexpr std::array<std::string_view, 5> openings = {
      "hi i need help with my @ @",
      "hello my @ is not working and the @ shows an error",
      "can you check the @ on my @ please",
      "why is my @ @ stuck",
      "I have a question about the @ and my @",
  };
  static constexpr std::array<std::string_view, 4> followups = {"ty", "thanks", "still waiting", "it is about the @"};
  static constexpr std::array<std::string_view, 3> details = {
      "sure it is the @ from #", "the @ was on #", "ok the @ number is #"};

  const std::size_t n_intents = SyntheticGrammar::intent_count(catalog.size());
  std::vector<Transcript> out;
  out.reserve(n_cases);
  for (std::size_t c = 0; c < n_cases; ++c) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + c + 1);
    Transcript t;
    t.case_id = "case-" + std::to_string(seed) + "-" + std::to_string(c);
    const std::size_t intent = rng.below(n_intents);
    t.intent = static_cast<int>(intent);
    const auto own = SyntheticGrammar::intent_keywords(intent);
    const auto shared = SyntheticGrammar::group_keywords(catalog.size(), intent / SyntheticGrammar::kGroupSize);
    auto keyword = [&]() -> std::string {
      if (rng.bernoulli(ambiguity)) return shared[rng.below(shared.size())];
      return own[rng.below(own.size())];
    };
    auto number = [&]() { return std::to_string(1000 + rng.below(9000)); };
    auto render = [&](std::string_view pattern) {
      std::string s = fill(pattern, keyword);
      std::string r;
      for (char ch : s) {
        if (ch == '#') {
          r += number();
        } else {
          r += ch;
        }
      }
      return r;
    };

    t.messages.push_back({Role::customer, render(pick(rng, openings)), std::nullopt});
    t.messages.push_back({Role::system, std::string(kSystemGreeting), std::nullopt});
    if (rng.bernoulli(0.5)) t.messages.push_back({Role::customer, render(pick(rng, followups)), std::nullopt});
    const int ask = static_cast<int>(2 * intent);
    t.messages.push_back({Role::advocate, catalog.texts[static_cast<std::size_t>(ask)], ask});
    t.messages.push_back({Role::customer, render(pick(rng, details)), std::nullopt});
    if (static_cast<std::size_t>(ask + 1) < catalog.size()) {
      t.messages.push_back({Role::advocate, catalog.texts[static_cast<std::size_t>(ask + 1)], ask + 1});
    }
    if (rng.bernoulli(0.5)) {
      t.messages.push_back({Role::advocate, "Is there anything else that I can do for you?", std::nullopt});
      t.messages.push_back({Role::customer, "No, that's it, Thanks!", std::nullopt});
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_transcripts(const std::filesystem::path& path, std::span<const Transcript> transcripts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : transcripts) {
    json msgs = json::array();
    for (const auto& m : t.messages) {
      msgs.push_back({{"role", role_name(m.role)},
                      {"text", m.text},
                      {"template_id", m.template_id ? json(*m.template_id) : json(nullptr)}});
    }
    out << json{{"case_id", t.case_id}, {"messages", msgs}, {"intent", t.intent}}.dump() << "\n";
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Transcript> load_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Transcript> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      Transcript t;
      t.case_id = j.at("case_id").get<std::string>();
      t.intent = j.value("intent", -1);
      for (const auto& m : j.at("messages")) {
        Message msg{parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>(), std::nullopt};
        if (m.contains("template_id") && !m["template_id"].is_null()) msg.template_id = m["template_id"].get<int>();
        require(!msg.template_id || msg.role == Role::advocate, "transcript: template_id on a non-advocate message");
        t.messages.push_back(std::move(msg));
      }
      require(!t.messages.empty() && t.messages.front().role == Role::customer,
              "transcript: must start with a customer message");
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw ContractError("transcript NDJSON: " + std::string(e.what()));
    }
  }
  return out;
}

std::string format_pretraining(const Transcript& t) {
  std::string out;
  for (std::size_t i = 0; i < t.messages.size(); ++i) {
    if (i > 0) out += '\n';
    out += '<';
    out += role_name(t.messages[i].role);
    out += ">: ";
    out += t.messages[i].text;
  }
  return out;
}

std::vector<PretrainSequence> pack_sequences(std::span<const std::vector<TokenId>> docs, std::size_t context_length,
                                             TokenId end_of_text) {
  require(context_length >= 2, "pack_sequences: context_length must be at least 2");
  std::vector<TokenId> stream;
  for (const auto& d : docs) {
    stream.insert(stream.end(), d.begin(), d.end());
    stream.push_back(end_of_text);
  }
  std::vector<PretrainSequence> out;
  for (std::size_t off = 0; off + context_length <= stream.size(); off += context_length) {
    out.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(off),
                     stream.begin() + static_cast<std::ptrdiff_t>(off + context_length));
  }
  return out;
}

std::vector<TokenId> truncate_context(std::span<const std::string> texts, std::size_t max_len, const Vocab& vocab) {
  require(!texts.empty(), "truncate_context: no prior messages");
  require(max_len >= 1, "truncate_context: max_len must be positive");
  std::string kept = texts.back();
  std::vector<TokenId> ids = encode(kept, vocab);
  if (ids.size() > max_len) {
    ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(max_len));
    return ids;
  }
  for (std::size_t i = texts.size() - 1; i-- > 0;) {
    std::string candidate = texts[i] + " " + kept;
    auto cand_ids = encode(candidate, vocab);
    if (cand_ids.size() > max_len) break;
    kept = std::move(candidate);
    ids = std::move(cand_ids);
  }
  return ids;
}

ClassificationExample build_classification_example(const Transcript& t, std::size_t reply_index, std::size_t max_len,
                                                   const Vocab& vocab) {
  require(reply_index >= 1, "classification example: no prior messages");
  require(reply_index < t.messages.size(), "classification example: reply index out of range");
  const auto& reply = t.messages[reply_index];
  require(reply.template_id.has_value(), "classification example: reply has no template");
  std::vector<std::string> texts;
  texts.reserve(reply_index);
  for (std::size_t i = 0; i < reply_index; ++i) texts.push_back(t.messages[i].text);
  return {truncate_context(texts, max_len, vocab), *reply.template_id, t.case_id};
}

std::vector<ClassificationExample> build_classification_set(std::span<const Transcript> transcripts,
                                                            std::size_t max_len, const Vocab& vocab) {
  std::vector<ClassificationExample> out;
  for (const auto& t : transcripts) {
    for (std::size_t i = 1; i < t.messages.size(); ++i) {
      if (t.messages[i].template_id) out.push_back(build_classification_example(t, i, max_len, vocab));
    }
  }
  return out;
}

bool in_train_fold(std::string_view case_id, double train_fraction, std::uint64_t seed) {
  return keyed_uniform(seed, case_id) < train_fraction;
}

std::pair<std::vector<ClassificationExample>, std::vector<ClassificationExample>> split_by_case(
    std::span<const ClassificationExample> examples, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0 && train_fraction < 1, "split_by_case: fraction must lie in (0,1)");
  std::pair<std::vector<ClassificationExample>, std::vector<ClassificationExample>> out;
  for (const auto& e : examples) {
    (in_train_fold(e.case_id, train_fraction, seed) ? out.first : out.second).push_back(e);
  }
  return out;
}

MaskedSequence mask_tokens(std::span<const TokenId> seq, double mask_rate, std::uint64_t seed, TokenId mask_id) {
  require(mask_rate > 0 && mask_rate < 1, "mask_tokens: rate must lie in (0,1)");
  require(!seq.empty(), "mask_tokens: empty sequence");
  const std::size_t n = seq.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(mask_rate * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  MaskedSequence out;
  out.token_ids.assign(seq.begin(), seq.end());
  for (auto p : idx) {
    out.targets.push_back(seq[p]);
    out.token_ids[p] = mask_id;
  }
  out.positions = std::move(idx);
  return out;
}

}  // namespace clsbench
