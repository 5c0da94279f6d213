// SPDX-License-Identifier: Apache-2.0
#include "clsbench/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "clsbench/checkpoint.hpp"
#include "clsbench/csv.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- manifest values ----------------------------------------------------------

struct Field {
  std::string section;
  std::string key;
  std::string value;

  [[noreturn]] void fail(const std::string& expected) const {
    throw ContractError("manifest [" + section + "] " + key + ": expected " + expected + ", got '" + value + "'");
  }

  std::uint64_t as_uint(std::uint64_t min = 0) const {
    std::uint64_t v = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size() || v < min) {
      fail(min > 0 ? "a positive integer" : "a non-negative integer");
    }
    return v;
  }

  double as_real() const {
    try {
      return parse_double(value);
    } catch (const ContractError&) {
      fail("a number");
    }
  }

  bool as_bool() const {
    std::string v = value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("True or False");
  }

  std::vector<std::string> as_list() const {
    std::string v = value;
    if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) fail("a comma-separated list");
      out.push_back(item.substr(b, e - b + 1));
    }
    if (out.empty()) fail("a non-empty list");
    return out;
  }

  std::pair<double, double> as_betas() const {
    const auto items = as_list();
    if (items.size() != 2) fail("[beta1, beta2]");
    Field a{section, key, items[0]}, b{section, key, items[1]};
    const double b1 = a.as_real(), b2 = b.as_real();
    if (!(b1 >= 0 && b1 < 1 && b2 >= 0 && b2 < 1)) fail("betas in [0,1)");
    return {b1, b2};
  }

  nn::DecayKind as_decay() const {
    if (value == "cosine") return nn::DecayKind::cosine;
    if (value == "linear") return nn::DecayKind::linear;
    fail("cosine or linear");
  }
};

std::string decay_name(nn::DecayKind k) { return k == nn::DecayKind::cosine ? "cosine" : "linear"; }

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

// Paper tables write some keys with spaces ("learning rate"); accept both.
std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), ' ', '-');
  return key;
}

bool known_preset(const std::string& name) {
  const auto names = preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

// Splits "learning-rate.nano" into ("learning-rate", "nano") when the suffix
// names a preset.
std::optional<std::pair<std::string, std::string>> preset_suffix(const std::string& key) {
  const auto dot = key.rfind('.');
  if (dot == std::string::npos) return std::nullopt;
  auto name = key.substr(dot + 1);
  if (!known_preset(name)) return std::nullopt;
  return std::pair{key.substr(0, dot), name};
}

void apply_shared_optimizer_key(const Field& f, double& warmup, double& weight_decay, double& beta1, double& beta2,
                                nn::DecayKind& decay, bool& fp16, bool& handled) {
  handled = true;
  if (f.key == "lr-decay-style") {
    decay = f.as_decay();
  } else if (f.key == "optimizer.params.betas") {
    std::tie(beta1, beta2) = f.as_betas();
  } else if (f.key == "optimizer.type") {
    if (f.value != "AdamW") f.fail("AdamW");
  } else if (f.key == "warmup") {
    warmup = f.as_real();
  } else if (f.key == "weight-decay") {
    weight_decay = f.as_real();
  } else if (f.key == "fp16.enabled") {
    fp16 = f.as_bool();
  } else {
    handled = false;
  }
}

void apply(RunManifest& m, const Field& f) {
  auto unknown = [&] { throw ContractError("manifest [" + f.section + "]: unknown key '" + f.key + "'"); };
  if (f.section == "run") {
    if (f.key == "out") {
      m.out = f.value;
    } else if (f.key == "run-id") {
      if (f.value.empty() || f.value.find('/') != std::string::npos) f.fail("a plain directory name");
      m.run_id = f.value;
    } else if (f.key == "seed") {
      m.seed = f.as_uint();
    } else if (f.key == "workers") {
      m.workers = f.as_uint(1);
    } else {
      unknown();
    }
  } else if (f.section == "corpus") {
    if (f.key == "n-cases") {
      m.corpus.n_cases = f.as_uint(1);
    } else if (f.key == "pretrain-cases") {
      m.corpus.pretrain_cases = f.as_uint(1);
    } else if (f.key == "n-templates") {
      m.corpus.n_templates = f.as_uint(1);
    } else if (f.key == "catalog") {
      m.corpus.catalog = f.value;
    } else if (f.key == "ambiguity") {
      m.corpus.ambiguity = f.as_real();
    } else if (f.key == "train-fraction") {
      m.corpus.train_fraction = f.as_real();
    } else {
      unknown();
    }
  } else if (f.section == "tokenizer") {
    if (f.key == "vocab-size") {
      m.vocab_size = f.as_uint(Vocab::kBaseSize);
    } else if (f.key == "sample-cases") {
      m.tokenizer_cases = f.as_uint(1);
    } else {
      unknown();
    }
  } else if (f.section == "model") {
    if (f.key == "presets") {
      m.presets = f.as_list();
      for (const auto& p : m.presets) {
        if (!known_preset(p)) f.fail("presets among nano, micro, mini");
      }
    } else {
      unknown();
    }
  } else if (f.section == "adapt") {
    auto& a = m.adapt;
    bool handled = false;
    apply_shared_optimizer_key(f, a.warmup, a.weight_decay, a.beta1, a.beta2, a.decay, a.fp16, handled);
    if (handled) return;
    if (auto ps = preset_suffix(f.key)) {
      if (ps->first == "learning-rate") {
        m.adapt_lr_by_preset[ps->second] = f.as_real();
        return;
      }
      if (ps->first == "max-steps") {
        m.max_steps_by_preset[ps->second] = f.as_uint(1);
        return;
      }
      unknown();
    }
    if (f.key == "max-position-embeddings") {
      m.context_length = f.as_uint(2);
    } else if (f.key == "max-steps") {
      a.max_steps = f.as_uint(1);
    } else if (f.key == "eval-steps") {
      a.eval_fraction = f.as_real();
    } else if (f.key == "save-steps") {
      a.save_fraction = f.as_real();
    } else if (f.key == "learning-rate") {
      m.adapt_lr = f.as_real();
    } else if (f.key == "batch-size") {
      a.batch_size = f.as_uint(1);
    } else if (f.key == "heldout-fraction") {
      a.heldout_fraction = f.as_real();
    } else if (f.key == "max-eval-sequences") {
      a.max_eval_sequences = f.as_uint(1);
    } else if (f.key == "grad-clip") {
      a.grad_clip = f.as_real();
    } else if (f.key == "objective") {
      if (f.value == "causal") {
        a.objective = Objective::causal;
      } else if (f.value == "masked") {
        a.objective = Objective::masked;
      } else {
        f.fail("causal or masked");
      }
    } else if (f.key == "mask-rate") {
      a.mask_rate = f.as_real();
    } else {
      unknown();
    }
  } else if (f.section == "finetune") {
    auto& c = m.finetune;
    bool handled = false;
    apply_shared_optimizer_key(f, c.warmup, c.weight_decay, c.beta1, c.beta2, c.decay, c.fp16, handled);
    if (handled) return;
    if (auto ps = preset_suffix(f.key)) {
      if (ps->first == "learning-rate") {
        m.finetune_lr_by_preset[ps->second] = f.as_real();
        return;
      }
      unknown();
    }
    if (f.key == "max-position-embeddings") {
      c.max_len = f.as_uint(1);
    } else if (f.key == "learning-rate") {
      c.lr = f.as_real();
    } else if (f.key == "batch-size") {
      c.batch_size = f.as_uint(1);
    } else if (f.key == "num-train-epochs") {
      c.epochs = f.as_uint(1);
    } else if (f.key == "grad-clip") {
      c.grad_clip = f.as_real();
    } else if (f.key == "select-best-epoch") {
      c.select_best_epoch = f.as_bool();
    } else {
      unknown();
    }
  } else {
    throw ContractError("manifest: unknown section [" + f.section + "]");
  }
}

void validate(const RunManifest& m) {
  auto ctx = [](const std::string& what, auto&& fn) {
    try {
      fn();
    } catch (const ContractError& e) {
      throw ContractError("manifest " + what + ": " + e.what());
    }
  };
  require(m.corpus.ambiguity >= 0 && m.corpus.ambiguity <= 1, "manifest [corpus] ambiguity must lie in [0,1]");
  require(m.corpus.train_fraction > 0 && m.corpus.train_fraction < 1,
          "manifest [corpus] train-fraction must lie in (0,1)");
  require(!m.presets.empty(), "manifest [model] presets must not be empty");
  require(m.finetune.max_len <= m.context_length,
          "manifest [finetune] max-position-embeddings exceeds [adapt] max-position-embeddings");
  if (!m.corpus.catalog.empty()) {
    require(fs::exists(m.corpus.catalog), "manifest [corpus] catalog: no such file " + m.corpus.catalog.string());
  }
  for (const auto& p : m.presets) {
    ctx("[adapt] (" + p + ")", [&] { m.adapt_for(p).validate(); });
    ctx("[finetune] (" + p + ")", [&] { m.finetune_for(p).validate(); });
  }
}

std::string step_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06llu", static_cast<unsigned long long>(step));
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// ---- manifest -----------------------------------------------------------------

RunManifest RunManifest::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ContractError("manifest line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunManifest m;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ContractError("manifest: key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) apply(m, {section, normalize_key(key), value.data()});
  }
  validate(m);
  return m;
}

RunManifest RunManifest::load(const fs::path& path) { return parse(read_file(path)); }

Preset RunManifest::preset(const std::string& name) const {
  auto p = family_preset(name, vocab_size, context_length);
  p.config.causal = adapt.objective == Objective::causal;
  return p;
}

AdaptConfig RunManifest::adapt_for(const std::string& name) const {
  AdaptConfig a = adapt;
  a.lr_peak = adapt_lr.value_or(preset(name).lr_peak);
  if (auto it = adapt_lr_by_preset.find(name); it != adapt_lr_by_preset.end()) a.lr_peak = it->second;
  if (auto it = max_steps_by_preset.find(name); it != max_steps_by_preset.end()) a.max_steps = it->second;
  a.seed = seed;
  return a;
}

FineTuneConfig RunManifest::finetune_for(const std::string& name) const {
  FineTuneConfig c = finetune;
  if (auto it = finetune_lr_by_preset.find(name); it != finetune_lr_by_preset.end()) c.lr = it->second;
  c.seed = seed;
  return c;
}

std::string RunManifest::canonical() const {
  std::vector<std::string> lines;
  auto put = [&](const std::string& k, const std::string& v) { lines.push_back(k + " = " + v); };
  auto num = [](double v) { return format_double(v); };
  put("run.seed", std::to_string(seed));
  put("corpus.n-cases", std::to_string(corpus.n_cases));
  put("corpus.pretrain-cases", std::to_string(corpus.pretrain_cases));
  put("corpus.n-templates", std::to_string(corpus.n_templates));
  put("corpus.catalog", corpus.catalog.empty() ? "" : file_digest(corpus.catalog));
  put("corpus.ambiguity", num(corpus.ambiguity));
  put("corpus.train-fraction", num(corpus.train_fraction));
  put("tokenizer.vocab-size", std::to_string(vocab_size));
  put("tokenizer.sample-cases", std::to_string(tokenizer_cases));
  put("model.presets", join(presets));
  put("adapt.max-position-embeddings", std::to_string(context_length));
  put("adapt.max-steps", std::to_string(adapt.max_steps));
  for (const auto& [p, s] : max_steps_by_preset) put("adapt.max-steps." + p, std::to_string(s));
  put("adapt.batch-size", std::to_string(adapt.batch_size));
  put("adapt.learning-rate", adapt_lr ? num(*adapt_lr) : "preset");
  for (const auto& [p, lr] : adapt_lr_by_preset) put("adapt.learning-rate." + p, num(lr));
  put("adapt.lr-decay-style", decay_name(adapt.decay));
  put("adapt.warmup", num(adapt.warmup));
  put("adapt.optimizer.params.betas", "[" + num(adapt.beta1) + ", " + num(adapt.beta2) + "]");
  put("adapt.weight-decay", num(adapt.weight_decay));
  put("adapt.eval-steps", num(adapt.eval_fraction));
  put("adapt.save-steps", num(adapt.save_fraction));
  put("adapt.heldout-fraction", num(adapt.heldout_fraction));
  put("adapt.max-eval-sequences", std::to_string(adapt.max_eval_sequences));
  put("adapt.grad-clip", num(adapt.grad_clip));
  put("adapt.objective", adapt.objective == Objective::causal ? "causal" : "masked");
  put("adapt.mask-rate", num(adapt.mask_rate));
  put("finetune.max-position-embeddings", std::to_string(finetune.max_len));
  put("finetune.learning-rate", num(finetune.lr));
  for (const auto& [p, lr] : finetune_lr_by_preset) put("finetune.learning-rate." + p, num(lr));
  put("finetune.batch-size", std::to_string(finetune.batch_size));
  put("finetune.num-train-epochs", std::to_string(finetune.epochs));
  put("finetune.lr-decay-style", decay_name(finetune.decay));
  put("finetune.warmup", num(finetune.warmup));
  put("finetune.optimizer.params.betas", "[" + num(finetune.beta1) + ", " + num(finetune.beta2) + "]");
  put("finetune.weight-decay", num(finetune.weight_decay));
  put("finetune.grad-clip", num(finetune.grad_clip));
  put("finetune.select-best-epoch", finetune.select_best_epoch ? "true" : "false");
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string RunManifest::config_hash() const { return hex64(fnv1a(canonical())); }

// ---- data stages ----------------------------------------------------------------

CorpusArtifacts build_corpus(const RunManifest& m) {
  CorpusArtifacts c;
  c.catalog = m.corpus.catalog.empty() ? TemplateCatalog::synthetic(m.corpus.n_templates)
                                       : TemplateCatalog::load_csv(m.corpus.catalog);
  // Distinct seeds keep adaptation text and labeled cases apart.
  c.pretrain = generate_corpus(2 * m.seed + 1, m.corpus.pretrain_cases, c.catalog, m.corpus.ambiguity);
  c.finetune = generate_corpus(2 * m.seed + 2, m.corpus.n_cases, c.catalog, m.corpus.ambiguity);
  return c;
}

std::vector<std::string> request_pool(std::span<const Transcript> transcripts, std::size_t max_items) {
  std::vector<std::string> out;
  for (const auto& t : transcripts) {
    for (std::size_t i = 1; i < t.messages.size() && out.size() < max_items; ++i) {
      if (!t.messages[i].template_id) continue;
      json msgs = json::array();
      for (std::size_t j = 0; j < i; ++j) {
        msgs.push_back({{"role", role_name(t.messages[j].role)}, {"text", t.messages[j].text}});
      }
      out.push_back(json{{"case_id", t.case_id}, {"messages", msgs}, {"k", 5}}.dump());
    }
    if (out.size() >= max_items) break;
  }
  return out;
}

void write_corpus(const CorpusArtifacts& c, const fs::path& dir, std::size_t max_pool) {
  fs::create_directories(dir);
  save_transcripts(dir / "pretrain.ndjson", c.pretrain);
  save_transcripts(dir / "finetune.ndjson", c.finetune);
  c.catalog.save_csv(dir / "catalog.csv");
  std::string pool;
  for (const auto& line : request_pool(c.finetune, max_pool)) pool += line + "\n";
  write_file(dir / "pool.ndjson", pool);
}

CorpusArtifacts read_corpus(const fs::path& dir) {
  return {load_transcripts(dir / "pretrain.ndjson"), load_transcripts(dir / "finetune.ndjson"),
          TemplateCatalog::load_csv(dir / "catalog.csv")};
}

Vocab build_tokenizer(const RunManifest& m, std::span<const Transcript> pretrain) {
  std::string text;
  const std::size_t n = std::min(m.tokenizer_cases, pretrain.size());
  for (std::size_t i = 0; i < n; ++i) text += format_pretraining(pretrain[i]) + "\n";
  return train_bpe(text, m.vocab_size);
}

std::vector<PretrainSequence> pretrain_sequences(std::span<const Transcript> pretrain, const Vocab& vocab,
                                                 std::size_t context_length) {
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(pretrain.size());
  for (const auto& t : pretrain) docs.push_back(encode(format_pretraining(t), vocab));
  return pack_sequences(docs, context_length);
}

ClassificationData classification_data(const RunManifest& m, std::span<const Transcript> finetune,
                                       const Vocab& vocab) {
  const auto all = build_classification_set(finetune, m.finetune.max_len, vocab);
  auto [train, test] = split_by_case(all, m.corpus.train_fraction, m.seed);
  return {std::move(train), std::move(test)};
}

// ---- checkpoints ------------------------------------------------------------------

fs::path checkpoint_path(const fs::path& run_dir, const std::string& preset, std::uint64_t step) {
  return run_dir / "adapt" / preset / (step_name(step) + ".ckpt");
}

fs::path finetune_dir(const fs::path& run_dir, const std::string& preset, std::uint64_t step) {
  return run_dir / "finetune" / preset / step_name(step);
}

void save_adapt_checkpoint(const Checkpoint& c, const Vocab& vocab, const std::string& preset, const fs::path& path) {
  CheckpointFile f;
  f.config = c.model.config();
  f.step = c.step;
  f.tokens_seen = c.tokens_seen;
  f.vocab_hash = vocab.hash();
  f.extra = {{"preset", preset},
             {"train_loss", c.train_loss},
             {"eval_loss", c.eval_loss},
             {"optimizer_step", c.optimizer.step}};
  store_model(f, c.model);
  // Moments are kept at fp32 like the weights; enough to inspect or resume.
  auto moments = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  f.tensors.push_back({"optimizer.m", {c.optimizer.m.size()}, moments(c.optimizer.m)});
  f.tensors.push_back({"optimizer.v", {c.optimizer.v.size()}, moments(c.optimizer.v)});
  fs::create_directories(path.parent_path());
  f.save(path);
}

LoadedCheckpoint load_adapt_checkpoint(const fs::path& path, const Vocab& vocab) {
  const auto f = CheckpointFile::load(path);
  require(f.vocab_hash.empty() || f.vocab_hash == vocab.hash(),
          "checkpoint " + path.string() + " was trained with a different tokenizer");
  return {restore_model(f), f.step, f.tokens_seen, f.extra.value("eval_loss", 0.0)};
}

std::vector<std::uint64_t> list_checkpoints(const fs::path& run_dir, const std::string& preset) {
  std::vector<std::uint64_t> steps;
  const auto dir = run_dir / "adapt" / preset;
  if (!fs::exists(dir)) return steps;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("step-", 0) != 0 || e.path().extension() != ".ckpt") continue;
    steps.push_back(std::stoull(name.substr(5)));
  }
  std::sort(steps.begin(), steps.end());
  return steps;
}

json metrics_to_json(const EvalMetrics& m) {
  json topk = json::object();
  for (const auto& [k, v] : m.top_k) topk[std::to_string(k)] = v;
  return {{"cls_loss", m.cls_loss}, {"top_k", topk}, {"n_examples", m.n_examples}};
}

EvalMetrics metrics_from_json(const json& j) {
  EvalMetrics m;
  m.cls_loss = j.at("cls_loss").get<double>();
  for (const auto& [k, v] : j.at("top_k").items()) m.top_k[std::stoi(k)] = v.get<double>();
  m.n_examples = j.at("n_examples").get<std::size_t>();
  return m;
}

void save_finetune(const FineTuneResult& r, const Vocab& vocab, const std::string& preset,
                   const LoadedCheckpoint& source, std::size_t max_len, const fs::path& dir) {
  fs::create_directories(dir);
  CheckpointFile f;
  f.config = r.classifier.model.config();
  f.step = source.step;
  f.tokens_seen = source.tokens_seen;
  f.vocab_hash = vocab.hash();
  f.extra = {{"preset", preset}, {"max_len", max_len}};
  store_model(f, r.classifier.model);
  store_head(f, r.classifier.head);
  // Version names the weights themselves, so identical reruns agree.
  f.extra["model_version"] = preset + "-" + step_name(source.step) + "-" + hex64(fnv1a(f.serialize())).substr(0, 8);
  f.save(dir / "model.ckpt");

  json metrics = {{"preset", preset},
                  {"step", source.step},
                  {"tokens_seen", source.tokens_seen},
                  {"lm_loss", source.eval_loss},
                  {"n_params", count_params(f.config)},
                  {"config", config_to_json(f.config)},
                  {"model_version", f.extra["model_version"]},
                  {"best_epoch", r.best_epoch},
                  {"test", metrics_to_json(r.test)}};
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
}

std::vector<CheckpointMeasure> read_measures(const RunManifest& m) {
  std::vector<CheckpointMeasure> out;
  for (const auto& preset : m.presets) {
    std::vector<std::uint64_t> steps = list_checkpoints(m.run_dir(), preset);
    const auto ft_root = m.run_dir() / "finetune" / preset;
    if (fs::exists(ft_root)) {
      for (const auto& e : fs::directory_iterator(ft_root)) {
        const auto name = e.path().filename().string();
        if (name.rfind("step-", 0) == 0) steps.push_back(std::stoull(name.substr(5)));
      }
    }
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    for (auto step : steps) {
      CheckpointMeasure cm;
      cm.model_name = preset;
      cm.step = step;
      const auto mpath = finetune_dir(m.run_dir(), preset, step) / "metrics.json";
      if (fs::exists(mpath)) {
        const auto j = json::parse(read_file(mpath));
        cm.config = config_from_json(j.at("config"));
        cm.tokens_seen = j.at("tokens_seen").get<std::uint64_t>();
        cm.lm_loss = j.at("lm_loss").get<double>();
        cm.finetune = metrics_from_json(j.at("test"));
      } else {
        cm.config = m.preset(preset).config;
      }
      out.push_back(std::move(cm));
    }
  }
  return out;
}

std::vector<ScalingPoint> write_scaling_report(const RunManifest& m, std::span<const CheckpointMeasure> measures,
                                               std::vector<std::string>* warnings) {
  const auto points = collect(measures, warnings);
  const auto fits = standard_fits(points);
  const auto dir = m.run_dir() / "scaling";
  fs::create_directories(dir);
  emit_report(points, fits, dir);
  return points;
}

// ---- sweep ------------------------------------------------------------------------

std::vector<ScalingPoint> run_sweep(const RunManifest& m, const Progress& progress) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  const auto run = m.run_dir();
  fs::create_directories(run);

  const auto corpus = build_corpus(m);
  write_corpus(corpus, run / "corpus");
  say("corpus: " + std::to_string(corpus.pretrain.size()) + " adaptation and " +
      std::to_string(corpus.finetune.size()) + " labeled cases");

  const auto vocab = build_tokenizer(m, corpus.pretrain);
  fs::create_directories(run / "tokenizer");
  vocab.save(run / "tokenizer" / "vocab.txt");

  const auto seqs = pretrain_sequences(corpus.pretrain, vocab, m.context_length);
  const auto data = classification_data(m, corpus.finetune, vocab);
  say("data: " + std::to_string(seqs.size()) + " sequences, " + std::to_string(data.train.size()) + " train / " +
      std::to_string(data.test.size()) + " test examples");

  std::vector<CheckpointMeasure> measures;
  for (const auto& name : m.presets) {
    const auto preset = m.preset(name);
    const auto acfg = m.adapt_for(name);
    const auto ledger = run / "adapt" / name / "ledger.ndjson";
    fs::create_directories(ledger.parent_path());
    fs::remove(ledger);
    const auto res = domain_adapt(DecoderModel<float>(preset.config, m.seed), seqs, acfg,
                                  [&](const LedgerRecord& r) { append_ledger(ledger, r); });
    std::vector<LoadedCheckpoint> sources;
    for (const auto& c : res.checkpoints) {
      save_adapt_checkpoint(c, vocab, name, checkpoint_path(run, name, c.step));
      sources.push_back({c.model.clone(), c.step, c.tokens_seen, c.eval_loss});
      say(name + " " + step_name(c.step) + " heldout lm_loss " + format_double(c.eval_loss));
    }

    // Fine-tunes are independent; results land in fixed slots so worker
    // count never changes the output.
    const auto fcfg = m.finetune_for(name);
    std::vector<std::optional<FineTuneResult>> results(sources.size());
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= sources.size() || failure) return;
          i = next++;
        }
        try {
          results[i] = fine_tune(sources[i].model, data.train, data.test, fcfg, corpus.catalog.size());
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(m.workers, sources.size()); ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto& r = *results[i];
      save_finetune(r, vocab, name, sources[i], fcfg.max_len, finetune_dir(run, name, sources[i].step));
      measures.push_back({name, preset.config, sources[i].step, sources[i].tokens_seen, sources[i].eval_loss, r.test});
      say(name + " " + step_name(sources[i].step) + " cls_loss " + format_double(r.test.cls_loss) + " top1 " +
          format_double(r.test.top_k.at(1)));
    }
  }
  return write_scaling_report(m, measures);
}

// ---- stamps -----------------------------------------------------------------------

std::string file_digest(const fs::path& path) { return hex64(fnv1a(read_file(path))); }

void write_stamp(const RunManifest& m, const std::string& command, const std::vector<fs::path>& artifacts) {
  json arts = json::object();
  for (const auto& rel : artifacts) {
    const auto p = m.run_dir() / rel;
    if (fs::is_regular_file(p)) arts[rel.generic_string()] = file_digest(p);
  }
  json stamp = {{"command", command},
                {"run_id", m.run_id},
                {"seed", m.seed},
                {"config_hash", m.config_hash()},
                {"fp16", {{"adapt", m.adapt.fp16}, {"finetune", m.finetune.fp16}, {"effective", false}}},
                {"artifacts", arts}};
  fs::create_directories(m.run_dir() / "stamps");
  write_file(m.run_dir() / "stamps" / (command + ".json"), stamp.dump(2) + "\n");
}

}  // namespace clsbench
