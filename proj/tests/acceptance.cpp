// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Tolerances and reduced desk-scale configurations are pinned here.
//
//   acceptance            all criteria
//   acceptance NAME...    only the named ones (see kCriteria)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "clsbench/abtest.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/gradcheck.hpp"
#include "clsbench/loadtest.hpp"
#include "clsbench/model.hpp"
#include "clsbench/pipeline.hpp"
#include "clsbench/rng.hpp"
#include "clsbench/serve.hpp"
#include "support.hpp"

using namespace clsbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- gradient correctness ------------------------------------------------------

constexpr double kGradTol = 1e-3;
constexpr double kGradEps = 1e-4;
constexpr double kGradBudgetSec = 120;

nn::Tensor<double> param(nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  return testing::random_param<double>(std::move(shape), seed, scale);
}

// Fixed random projection to a scalar so every output coordinate matters.
nn::Tensor<double> project(const nn::Tensor<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (auto& v : w) v = rng.normal();
  return nn::sum(nn::mul(y, nn::Tensor<double>::from(y.shape(), std::move(w))));
}

Outcome grad_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  auto check = [&](const std::string& name, const std::function<nn::Tensor<double>()>& f, nn::Tensor<double>& x,
                   std::size_t coords = 0, std::uint64_t seed = 0) {
    const double err = nn::grad_check(f, x, kGradEps, coords, seed);
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  };
  using namespace nn;
  {
    auto a = param({4, 5}, 2), b = param({5, 3}, 3);
    auto f = [&] { return project(matmul(a, b), 9); };
    check("matmul", f, a);
    check("matmul", f, b);
  }
  {
    auto x = param({6, 4}, 4), w = param({4, 3}, 5), b = param({3}, 6);
    auto f = [&] { return project(linear(x, w, b), 10); };
    check("linear", f, x);
    check("linear", f, w);
    check("linear", f, b);
  }
  {
    auto a = param({3, 4}, 7), b = param({3, 4}, 8);
    auto f = [&] { return project(mul(add(a, b), a), 11); };
    check("add/mul", f, a);
    check("add/mul", f, b);
  }
  {
    auto x = param({4, 6}, 12, 2.0);
    check("gelu", [&] { return project(gelu(x), 13); }, x);
  }
  {
    auto x = param({5, 8}, 14), g = param({8}, 15), b = param({8}, 16);
    auto f = [&] { return project(layer_norm(x, g, b), 17); };
    check("layer_norm", f, x);
    check("layer_norm", f, g);
    check("layer_norm", f, b);
  }
  {
    auto x = param({3, 7}, 18);
    check("softmax", [&] { return project(softmax(x), 19); }, x);
  }
  {
    auto t = param({10, 4}, 20);
    const std::vector<std::int32_t> ids{3, 3, 0, 9, 5};
    check("embedding", [&] { return project(embedding(t, ids), 21); }, t);
  }
  {
    auto x = param({6, 3}, 22);
    const std::vector<std::size_t> rows{5, 0, 5};
    check("gather_rows", [&] { return project(gather_rows(x, rows), 23); }, x);
  }
  {
    auto qkv = param({10, 24}, 24);
    const AttentionLayout causal{2, 5, 2, true, {5, 3}};
    check("attention", [&] { return project(attention(qkv, causal), 25); }, qkv);
    auto qkv2 = param({8, 18}, 26);
    const AttentionLayout bidi{2, 4, 2, false, {4, 2}};
    check("attention", [&] { return project(attention(qkv2, bidi), 27); }, qkv2);
  }
  {
    auto x = param({6, 5}, 28), w = param({5, 4}, 29), b = param({4}, 30);
    const std::vector<std::int32_t> t{0, 3, kIgnoreTarget, 1, 2, 2};
    auto f = [&] { return cross_entropy(linear(x, w, b), t); };
    check("cross_entropy", f, x);
    check("cross_entropy", f, w);
    check("cross_entropy", f, b);
  }
  // Full nano model, LM and classification losses together.
  const auto cfg = family_preset("nano", 270, 12).config;
  auto model = DecoderModel<float>(cfg, 5).cast<double>();
  auto head = ClassifierHead<float>::init(cfg.d_model, 6, 9).cast<double>();
  Rng rng(17);
  std::vector<std::vector<TokenId>> seqs;
  for (std::size_t len : {9, 12, 4}) {
    std::vector<TokenId> s(len);
    for (auto& id : s) id = static_cast<TokenId>(rng.below(cfg.vocab_size - 2));
    seqs.push_back(std::move(s));
  }
  const auto batch = TokenBatch::from_sequences(seqs);
  const std::vector<std::int32_t> labels{1, 4, 0};
  auto loss = [&] { return add(lm_loss(model, batch), cross_entropy(forward_classify(model, head, batch), labels)); };
  std::uint64_t seed = 100;
  for (auto& np : model.named_parameters()) check("nano." + np.name, loss, *np.tensor, 8, ++seed);
  check("nano.head.weight", loss, head.weight, 8, 99);
  check("nano.head.bias", loss, head.bias);

  const double sec = seconds_since(t0);
  return {worst < kGradTol && sec < kGradBudgetSec,
          "worst rel-err " + num(worst, 3) + " (" + worst_name + ") < " + num(kGradTol) + ", " + num(sec, 3) +
              " s < " + num(kGradBudgetSec) + " s"};
}

// ---- pipeline smoke ----------------------------------------------------------------

constexpr double kSmokeTop1 = 0.9;
constexpr double kSmokeBudgetSec = 30 * 60;

Outcome pipeline_smoke() {
  testing::ScratchDir dir("acceptance-smoke");
  const auto t0 = Clock::now();
  const auto m = RunManifest::parse("[run]\nout = " + dir.path().string() +
                                    "\nrun-id = smoke\nseed = 1\n"
                                    "[corpus]\nn-cases = 3000\npretrain-cases = 3000\nn-templates = 64\nambiguity = 0\n"
                                    "[model]\npresets = nano\n"
                                    "[adapt]\nmax-steps = 2000\nsave-steps = 1\neval-steps = 0.1\n"
                                    "[finetune]\nnum-train-epochs = 1\nlearning-rate = 3e-3\nbatch-size = 8\n"
                                    "max-position-embeddings = 64\n");
  const auto points = run_sweep(m);
  const double sec = seconds_since(t0);
  if (points.size() != 1) return {false, "expected one final checkpoint, got " + std::to_string(points.size())};
  const double top1 = points[0].top_k.at(1);
  return {top1 >= kSmokeTop1 && sec < kSmokeBudgetSec, "nano 2000 steps, 1 epoch: top-1 " + num(top1) +
                                                           " >= " + num(kSmokeTop1) + ", " + num(sec, 3) + " s"};
}

// ---- domain-adaptation uplift --------------------------------------------------------

Outcome adaptation_uplift() {
  const auto m = RunManifest::parse(
      "[run]\nseed = 3\n"
      "[corpus]\nn-cases = 3000\npretrain-cases = 3000\nn-templates = 64\nambiguity = 0.5\n"
      "[model]\npresets = nano\n"
      "[adapt]\nmax-steps = 400\nsave-steps = 1\n"
      "[finetune]\nnum-train-epochs = 1\nlearning-rate = 3e-3\nbatch-size = 8\nmax-position-embeddings = 64\n");
  const auto corpus = build_corpus(m);
  const auto vocab = build_tokenizer(m, corpus.pretrain);
  const auto seqs = pretrain_sequences(corpus.pretrain, vocab, m.context_length);
  const auto data = classification_data(m, corpus.finetune, vocab);
  const DecoderModel<float> init(m.preset("nano").config, m.seed);
  const auto adapted = domain_adapt(init, seqs, m.adapt_for("nano"));
  const auto cfg = m.finetune_for("nano");
  const auto base = fine_tune(init, data.train, data.test, cfg, corpus.catalog.size());
  const auto da = fine_tune(adapted.checkpoints.back().model, data.train, data.test, cfg, corpus.catalog.size());
  const double n = static_cast<double>(base.test.n_examples);
  bool pass = true;
  std::string detail;
  for (int k : {1, 3, 5}) {
    const double a = da.test.top_k.at(k), b = base.test.top_k.at(k);
    // Standard error of a difference of two independent proportions.
    const double se = std::sqrt(a * (1 - a) / n + b * (1 - b) / n);
    pass = pass && (a - b) > 2 * se;
    detail += (detail.empty() ? "" : "; ") + std::string("top-") + std::to_string(k) + " " + num(a, 3) + " vs " +
              num(b, 3) + " (2se " + num(2 * se, 2) + ")";
  }
  return {pass, detail + ", n=" + std::to_string(base.test.n_examples)};
}

// ---- scaling --------------------------------------------------------------------------

constexpr double kScalingR2 = 0.8;
constexpr std::size_t kMaxInversions = 1;

// Interpolated cls_loss of a model at ln(tokens), within its observed range.
std::optional<double> cls_at(const std::vector<ScalingPoint>& pts, double ln_t) {
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = std::log(static_cast<double>(pts[i].tokens_seen));
    const double b = std::log(static_cast<double>(pts[i + 1].tokens_seen));
    if (ln_t >= a && ln_t <= b) {
      const double w = b > a ? (ln_t - a) / (b - a) : 0.0;
      return pts[i].cls_loss + w * (pts[i + 1].cls_loss - pts[i].cls_loss);
    }
  }
  return std::nullopt;
}

// 3 presets x 5 checkpoints, sized for one laptop core.
const char* const kScalingManifest =
    "run-id = scaling\nseed = 1\n"
    "[corpus]\nn-cases = 3000\npretrain-cases = 3000\nn-templates = 64\nambiguity = 0.25\n"
    "[adapt]\nmax-steps = 100\nsave-steps = 0.2\neval-steps = 0.2\n"
    "[finetune]\nnum-train-epochs = 3\nbatch-size = 8\nmax-position-embeddings = 48\n"
    "learning-rate.nano = 1e-3\nlearning-rate.micro = 7.5e-4\nlearning-rate.mini = 4e-4\n";

Outcome scaling_relations() {
  testing::ScratchDir dir("acceptance-scaling");
  const auto m = RunManifest::parse("[run]\nout = " + dir.path().string() + "\n" + kScalingManifest);
  const auto points = run_sweep(m);
  std::map<std::string, std::vector<ScalingPoint>> by_model;
  for (const auto& p : points) by_model[p.model_name].push_back(p);
  std::string detail;
  bool pass = by_model.size() == 3;
  for (const auto& [name, pts] : by_model) pass = pass && pts.size() >= 5;

  double pooled_r2 = 0;
  std::vector<std::string> bad_slopes;
  for (const auto& f : standard_fits(points)) {
    if (f.scope == "pooled") pooled_r2 = f.fit.r_squared;
    if (f.scope != "pooled" && f.x == "ln_tokens") {
      detail += f.scope + " slope " + num(f.fit.slope, 3) + "; ";
      if (!(f.fit.slope < 0)) bad_slopes.push_back(f.scope);
    }
  }
  // Ordering: at each checkpoint of a smaller preset, every larger preset
  // (interpolated at the same tokens) should have lower cls_loss.
  const auto order = m.presets;
  std::size_t inversions = 0, comparisons = 0;
  for (std::size_t s = 0; s < order.size(); ++s) {
    for (std::size_t l = s + 1; l < order.size(); ++l) {
      for (const auto& p : by_model[order[s]]) {
        const auto other = cls_at(by_model[order[l]], std::log(static_cast<double>(p.tokens_seen)));
        if (!other) continue;
        ++comparisons;
        if (*other >= p.cls_loss) ++inversions;
      }
    }
  }
  pass = pass && pooled_r2 >= kScalingR2 && bad_slopes.empty() && inversions <= kMaxInversions && comparisons > 0;
  detail += "pooled R2 " + num(pooled_r2, 3) + " >= " + num(kScalingR2) + ", inversions " +
            std::to_string(inversions) + "/" + std::to_string(comparisons) + " <= " + std::to_string(kMaxInversions);
  return {pass, detail};
}

// ---- oracles ---------------------------------------------------------------------------

constexpr int kOracleInstances = 1000;

std::vector<int> topk_by_sort(const std::vector<double>& p, std::size_t k) {
  std::vector<int> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[a] > p[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

// k-th smallest (0-based) straight from the order-statistic definition.
double order_stat(const std::vector<double>& v, std::size_t k) {
  for (double c : v) {
    std::size_t below = 0, at_most = 0;
    for (double x : v) {
      below += x < c;
      at_most += x <= c;
    }
    if (below <= k && k < at_most) return c;
  }
  return NAN;
}

double percentile_by_definition(const std::vector<double>& v, double q) {
  const double rank = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  const double a = order_stat(v, lo);
  if (frac == 0) return a;
  return a + frac * (order_stat(v, lo + 1) - a);
}

struct MkOracle {
  long long s = 0;
  double var = 0;
  double p = 1;
};

MkOracle mk_by_pairs(const std::vector<double>& x) {
  MkOracle r;
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i >= j) continue;
      if (x[j] > x[i]) ++concordant;
      if (x[j] < x[i]) ++discordant;
    }
  }
  r.s = concordant - discordant;
  std::map<double, int> counts;
  for (double v : x) ++counts[v];
  const double nd = static_cast<double>(n);
  double var = nd * (nd - 1) * (2 * nd + 5);
  for (const auto& [v, t] : counts) var -= t * (t - 1.0) * (2.0 * t + 5);
  r.var = var / 18;
  double z = 0;
  if (r.s > 0) z = (r.s - 1) / std::sqrt(r.var);
  if (r.s < 0) z = (r.s + 1) / std::sqrt(r.var);
  r.p = 2 * (1 - 0.5 * std::erfc(-std::fabs(z) / std::numbers::sqrt2));
  return r;
}

// Student t CDF by composite Simpson integration of the density from 0.
double t_cdf_by_integration(double t, double dof) {
  const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * std::numbers::pi);
  auto f = [&](double x) { return c * std::pow(1 + x * x / dof, -(dof + 1) / 2); };
  const int n = 4000;
  const double h = std::fabs(t) / n;
  double acc = f(0) + f(std::fabs(t));
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4 : 2) * f(i * h);
  const double half = acc * h / 3;
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

Outcome oracle_agreement() {
  Rng rng(2024);
  int topk_bad = 0, pct_bad = 0, mk_bad = 0, t_bad = 0;
  double t_worst = 0;
  for (int inst = 0; inst < kOracleInstances; ++inst) {
    // Top-k with deliberate ties.
    const std::size_t c = 1 + rng.below(40);
    std::vector<double> p(c);
    for (auto& v : p) v = static_cast<double>(rng.below(8)) / 8.0;
    const std::size_t k = 1 + rng.below(c + 2);
    const auto want = topk_by_sort(p, k);
    if (topk_indices(p, k) != want) ++topk_bad;
    const std::vector<float> logits(p.begin(), p.end());
    for (int label = 0; label < static_cast<int>(c); ++label) {
      const bool in_sorted = std::find(want.begin(), want.end(), label) != want.end();
      if (topk_hit(logits, label, static_cast<int>(std::min(k, c))) != in_sorted) ++topk_bad;
    }

    // Percentile.
    std::vector<double> v(1 + rng.below(60));
    for (auto& x : v) x = rng.bernoulli(0.3) ? static_cast<double>(rng.below(5)) : 100 * rng.uniform();
    const double q = rng.bernoulli(0.1) ? static_cast<double>(rng.below(3)) * 50 : 100 * rng.uniform();
    if (std::fabs(percentile(v, q) - percentile_by_definition(v, q)) > 1e-9) ++pct_bad;

    // Mann-Kendall, n <= 12 with ties.
    std::vector<double> s(3 + rng.below(10));
    for (auto& x : s) x = static_cast<double>(rng.below(6));
    if (std::all_of(s.begin(), s.end(), [&](double x) { return x == s[0]; })) s[0] += 1;
    const auto got = mann_kendall(s);
    const auto ref = mk_by_pairs(s);
    if (got.s != ref.s || std::fabs(got.var_s - ref.var) > 1e-9 || std::fabs(got.p_value - ref.p) > 1e-9) ++mk_bad;

    // Student t CDF.
    const double dof = 1 + 60 * rng.uniform();
    const double t = 8 * (rng.uniform() - 0.5);
    const double err = std::fabs(student_t_cdf(t, dof) - t_cdf_by_integration(t, dof));
    t_worst = std::max(t_worst, err);
    if (err > 1e-6) ++t_bad;
  }
  const bool pass = topk_bad == 0 && pct_bad == 0 && mk_bad == 0 && t_bad == 0;
  return {pass, std::to_string(kOracleInstances) + " instances each; mismatches top-k " + std::to_string(topk_bad) +
                    ", percentile " + std::to_string(pct_bad) + ", mann-kendall " + std::to_string(mk_bad) +
                    ", t-cdf " + std::to_string(t_bad) + " (worst " + num(t_worst, 2) + ")"};
}

// ---- load test methodology -------------------------------------------------------------

constexpr double kServiceMs = 150;
constexpr double kLowRateTolerance = 0.10;

Outcome loadtest_methodology() {
  ServerOptions opts;
  opts.port = 0;
  opts.queue_depth = 1000;
  HttpServer server(opts, mock_predictor(std::chrono::milliseconds(static_cast<int>(kServiceMs)), 64),
                    [] { return HealthStatus{true, "ok", "mock", 64}; });
  const int port = server.start();
  const auto client = http_predict_client("127.0.0.1", port);
  const std::vector<std::string> pool{R"({"case_id":"a","messages":[{"role":"CUSTOMER","text":"hi"}]})"};

  // Low rate first so the overloaded run cannot leave a backlog behind.
  const auto low = run_rate(1, 20, pool, 1, client);
  const auto high = run_rate(10, 20, pool, 2, client);
  server.stop();
  const std::vector<LatencyReport> reports{compute_report(low), compute_report(high)};

  bool growing = true;
  std::string p99s;
  double prev = -1;
  for (const auto& w : window_stats(high.samples, 4.0)) {
    if (w.n == 0) continue;
    p99s += (p99s.empty() ? "" : " ") + num(w.p99_ms, 4);
    growing = growing && w.p99_ms > prev;
    prev = w.p99_ms;
  }
  const double low_avg = reports[0].client ? reports[0].client->peak_window_avg_ms : 0;
  const bool low_ok = std::fabs(low_avg - kServiceMs) <= kLowRateTolerance * kServiceMs && reports[0].error_count == 0;
  const auto rows = report_rows(reports);
  const auto& h = rows.at(0);
  const bool columns = h.size() >= 4 && h[0] == "rate" && h[1] == "avg" && h[2] == "p99" && h[3] == "max";
  return {growing && low_ok && columns && reports[1].error_count == 0,
          "10 rps window p99 [" + p99s + "] ms strictly growing; 1 rps avg " + num(low_avg) + " ms within " +
              num(100 * kLowRateTolerance) + "% of " + num(kServiceMs) + "; columns " +
              (columns ? "rate,avg,p99,max" : "wrong")};
}

// ---- train/serve truncation parity -------------------------------------------------------

Outcome truncation_parity() {
  const auto catalog = TemplateCatalog::synthetic(64);
  const auto transcripts = generate_corpus(77, 1000, catalog, 0.3);
  std::string text;
  for (std::size_t i = 0; i < 300; ++i) text += format_pretraining(transcripts[i]) + "\n";
  const auto vocab = train_bpe(text, 400);
  const auto cfg = family_preset("nano", vocab.size(), 128).config;
  Rng rng(5);
  std::size_t checked = 0, mismatched = 0;
  // A few context budgets, including ones that cut mid-conversation.
  for (std::size_t max_len : {12, 40, 128}) {
    TemplateService svc;
    svc.load({DecoderModel<float>(cfg, 1), ClassifierHead<float>::init(cfg.d_model, catalog.size(), 2)}, vocab,
             max_len, "parity");
    for (const auto& t : transcripts) {
      for (std::size_t i = 1; i < t.messages.size(); ++i) {
        if (!t.messages[i].template_id) continue;
        PredictRequest req;
        req.case_id = t.case_id;
        for (std::size_t j = 0; j < i; ++j) req.messages.push_back({t.messages[j].role, t.messages[j].text});
        ++checked;
        if (svc.request_tokens(req) != build_classification_example(t, i, max_len, vocab).token_ids) ++mismatched;
      }
    }
  }
  return {mismatched == 0 && checked >= 1000, std::to_string(transcripts.size()) + " transcripts, " +
                                                  std::to_string(checked) + " contexts, " +
                                                  std::to_string(mismatched) + " mismatches"};
}

// ---- reproducibility ----------------------------------------------------------------------

Outcome reproducibility() {
  testing::ScratchDir dir("acceptance-repro");
  auto manifest = [&](const std::string& id) {
    return RunManifest::parse("[run]\nout = " + dir.path().string() + "\nrun-id = " + id +
                              "\nseed = 11\n"
                              "[corpus]\nn-cases = 300\npretrain-cases = 300\nn-templates = 16\n"
                              "[tokenizer]\nvocab-size = 320\nsample-cases = 100\n"
                              "[model]\npresets = nano, micro\n"
                              "[adapt]\nmax-position-embeddings = 48\nmax-steps = 12\nbatch-size = 4\n"
                              "save-steps = 0.25\neval-steps = 0.25\nmax-eval-sequences = 8\n"
                              "[finetune]\nmax-position-embeddings = 32\nnum-train-epochs = 1\n");
  };
  const auto a = manifest("first"), b = manifest("second");
  run_sweep(a);
  run_sweep(b);
  bool same = true;
  for (const auto* rel : {"scaling/scaling_points.csv", "scaling/scaling_fits.csv"}) {
    const auto x = testing::read_file(a.run_dir() / rel);
    same = same && !x.empty() && x == testing::read_file(b.run_dir() / rel);
  }
  const auto rows = read_points_csv(a.run_dir() / "scaling/scaling_points.csv");
  return {same && rows.size() == 8, "two sweeps, same manifest and seed: scaling_points.csv and scaling_fits.csv " +
                                        std::string(same ? "byte-identical" : "differ") + ", " +
                                        std::to_string(rows.size()) + " points"};
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"gradient-correctness", grad_correctness}, {"pipeline-smoke", pipeline_smoke},
    {"adaptation-uplift", adaptation_uplift},   {"scaling-relations", scaling_relations},
    {"oracle-agreement", oracle_agreement},     {"loadtest-methodology", loadtest_methodology},
    {"truncation-parity", truncation_parity},   {"reproducibility", reproducibility},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
