// SPDX-License-Identifier: Apache-2.0
#include <string>

#include "clsbench/errors.hpp"
#include "clsbench/pipeline.hpp"
#include "clsbench/serve.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clsbench;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    RunManifest::parse(text);
  } catch (const ContractError& e) {
    return e.what();
  }
  return "";
}

// Small enough to run the whole sweep twice in a few seconds.
std::string tiny_manifest(const fs::path& out, const std::string& run_id, int workers) {
  return "[run]\nout = " + out.string() + "\nrun-id = " + run_id + "\nseed = 7\nworkers = " +
         std::to_string(workers) +
         "\n[corpus]\nn-cases = 120\npretrain-cases = 120\nn-templates = 8\nambiguity = 0\n"
         "[tokenizer]\nvocab-size = 300\nsample-cases = 60\n"
         "[model]\npresets = nano\n"
         "[adapt]\nmax-position-embeddings = 32\nmax-steps = 6\nbatch-size = 2\nsave-steps = 0.34\n"
         "eval-steps = 0.34\nmax-eval-sequences = 4\n"
         "[finetune]\nmax-position-embeddings = 24\nbatch-size = 8\nnum-train-epochs = 1\n";
}

}  // namespace

TEST_CASE("empty manifest yields defaults") {
  const auto m = RunManifest::parse("");
  CHECK(m.presets == std::vector<std::string>{"nano", "micro", "mini"});
  CHECK(m.run_dir() == fs::path("runs/default"));
  CHECK(m.adapt_for("micro").lr_peak == m.preset("micro").lr_peak);
  CHECK(m.finetune_for("nano").max_len <= m.context_length);
}

TEST_CASE("optimizer keys as the paper writes them") {
  const auto m = RunManifest::parse(R"(
# comments are fine
[adapt]
fp16.enabled = True
lr-decay-style = cosine
max-position-embeddings = 96
optimizer.params.betas = [0.9, 0.95]
optimizer.type = AdamW
warmup = 0.01
weight-decay = 0.01
max-steps = 2000
eval-steps = 0.1
save-steps = 0.1
learning rate = 0.0001
batch size = 4

[finetune]
num-train-epochs = 2
lr-decay-style = linear
optimizer.params.betas = [0.9, 0.99]
learning-rate = 1e-5
batch-size = 128
warmup = 0.1
weight-decay = 0
max-position-embeddings = 64
)");
  const auto a = m.adapt_for("nano");
  CHECK(a.fp16);
  CHECK(a.decay == nn::DecayKind::cosine);
  CHECK(m.context_length == 96);
  CHECK(a.beta2 == doctest::Approx(0.95));
  CHECK(a.max_steps == 2000);
  CHECK(a.lr_peak == doctest::Approx(1e-4));
  CHECK(a.batch_size == 4);
  const auto f = m.finetune_for("mini");
  CHECK(f.epochs == 2);
  CHECK(f.decay == nn::DecayKind::linear);
  CHECK(f.beta2 == doctest::Approx(0.99));
  CHECK(f.lr == doctest::Approx(1e-5));
  CHECK(f.batch_size == 128);
  CHECK(f.max_len == 64);
}

TEST_CASE("per-preset overrides") {
  const auto m = RunManifest::parse(
      "[adapt]\nmax-steps = 100\nmax-steps.mini = 50\nlearning-rate.micro = 1e-3\n"
      "[finetune]\nlearning-rate = 2e-3\nlearning-rate.nano = 5e-3\n");
  CHECK(m.adapt_for("nano").max_steps == 100);
  CHECK(m.adapt_for("mini").max_steps == 50);
  CHECK(m.adapt_for("micro").lr_peak == doctest::Approx(1e-3));
  CHECK(m.adapt_for("nano").lr_peak == m.preset("nano").lr_peak);
  CHECK(m.finetune_for("nano").lr == doctest::Approx(5e-3));
  CHECK(m.finetune_for("mini").lr == doctest::Approx(2e-3));
}

TEST_CASE("manifest errors name the field") {
  CHECK(error_of("[adapt]\nlearning-rat = 1\n").find("learning-rat") != std::string::npos);
  CHECK(error_of("[adpat]\nmax-steps = 1\n").find("[adpat]") != std::string::npos);
  CHECK(error_of("seed = 3\n").find("seed") != std::string::npos);
  CHECK(error_of("[adapt]\nmax-steps = many\n").find("max-steps") != std::string::npos);
  CHECK(error_of("[adapt]\nmax-steps = 0\n").find("positive") != std::string::npos);
  CHECK(error_of("[adapt]\noptimizer.type = SGD\n").find("AdamW") != std::string::npos);
  CHECK(error_of("[adapt]\noptimizer.params.betas = [0.9]\n").find("betas") != std::string::npos);
  CHECK(error_of("[adapt]\nlr-decay-style = step\n").find("lr-decay-style") != std::string::npos);
  CHECK(error_of("[finetune]\nselect-best-epoch = maybe\n").find("select-best-epoch") != std::string::npos);
  CHECK(error_of("[model]\npresets = nano, huge\n").find("presets") != std::string::npos);
  CHECK(error_of("[corpus]\nambiguity = 1.5\n").find("ambiguity") != std::string::npos);
  CHECK(error_of("[adapt]\nwarmup = 2\n").find("[adapt]") != std::string::npos);
  CHECK(error_of("[adapt]\nmax-steps = 1\nmax-steps = 2\n").find("line") != std::string::npos);
  CHECK(error_of("[adapt]\nmax-position-embeddings = 32\n[finetune]\nmax-position-embeddings = 64\n")
            .find("max-position-embeddings") != std::string::npos);
  CHECK(error_of("[corpus]\ncatalog = /no/such/catalog.csv\n").find("catalog") != std::string::npos);
  CHECK_THROWS_AS(RunManifest::load("/no/such/manifest.ini"), IoError);
}

TEST_CASE("config hash follows effective values only") {
  const auto a = RunManifest::parse("[run]\nseed = 3\n[adapt]\nwarmup = 0.01\nmax-steps = 10\n");
  const auto b = RunManifest::parse("; same values\n[adapt]\nmax-steps=10\n\n[run]\nseed= 3\n");
  const auto c = RunManifest::parse("[run]\nseed = 4\n[adapt]\nmax-steps = 10\n");
  const auto d = RunManifest::parse("[run]\nseed = 3\nout = elsewhere\n[adapt]\nmax-steps = 10\n");
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.config_hash() != c.config_hash());
  // Output location does not change what is computed.
  CHECK(a.config_hash() == d.config_hash());
  CHECK(a.canonical().find("adapt.max-steps = 10\n") != std::string::npos);
}

TEST_CASE("request pool bodies parse as predict requests") {
  const auto c = build_corpus(RunManifest::parse("[corpus]\nn-cases = 20\npretrain-cases = 5\n"));
  const auto pool = request_pool(c.finetune, 30);
  REQUIRE(pool.size() == 30);
  for (const auto& body : pool) {
    const auto r = parse_predict_request(nlohmann::json::parse(body));
    CHECK_FALSE(r.messages.empty());
    CHECK(r.k == 5);
  }
}

TEST_CASE("sweep reruns are byte-identical and servable") {
  testing::ScratchDir dir("sweep");
  const auto m1 = RunManifest::parse(tiny_manifest(dir.path(), "a", 1));
  const auto m2 = RunManifest::parse(tiny_manifest(dir.path(), "b", 2));
  // Worker count and run id do not change what is computed.
  CHECK(m1.config_hash() == m2.config_hash());
  const auto p1 = run_sweep(m1);
  const auto p2 = run_sweep(m2);
  REQUIRE(p1.size() == 3);
  for (const auto& rel : {"scaling/scaling_points.csv", "scaling/scaling_fits.csv", "tokenizer/vocab.txt",
                          "corpus/pool.ndjson", "adapt/nano/ledger.ndjson"}) {
    INFO(rel);
    const auto a = testing::read_file(m1.run_dir() / rel);
    CHECK_FALSE(a.empty());
    CHECK(a == testing::read_file(m2.run_dir() / rel));
  }
  const auto steps = list_checkpoints(m1.run_dir(), "nano");
  REQUIRE(steps.size() == 3);
  CHECK(steps.back() == 6);

  // Scaling report regenerated from disk matches the sweep's own.
  const auto before = testing::read_file(m1.run_dir() / "scaling/scaling_points.csv");
  write_scaling_report(m1, read_measures(m1));
  CHECK(testing::read_file(m1.run_dir() / "scaling/scaling_points.csv") == before);

  // Fine-tuned output loads in the server with a stable version.
  const auto ft = finetune_dir(m1.run_dir(), "nano", 6);
  TemplateService svc;
  svc.load_files(ft / "model.ckpt", m1.run_dir() / "tokenizer/vocab.txt", 0);
  const auto metrics = nlohmann::json::parse(testing::read_file(ft / "metrics.json"));
  CHECK(svc.health().ready);
  CHECK(svc.health().model_version == metrics.at("model_version").get<std::string>());
  CHECK(svc.health().model_version.rfind("nano-step-000006-", 0) == 0);
  TemplateService other;
  other.load_files(finetune_dir(m2.run_dir(), "nano", 6) / "model.ckpt", m2.run_dir() / "tokenizer/vocab.txt", 0);
  CHECK(other.health().model_version == svc.health().model_version);

  write_stamp(m1, "sweep", {"scaling/scaling_points.csv"});
  const auto stamp = nlohmann::json::parse(testing::read_file(m1.run_dir() / "stamps/sweep.json"));
  CHECK(stamp.at("config_hash") == m1.config_hash());
  CHECK(stamp.at("artifacts").at("scaling/scaling_points.csv") ==
        file_digest(m1.run_dir() / "scaling/scaling_points.csv"));
}
