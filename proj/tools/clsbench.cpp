// SPDX-License-Identifier: Apache-2.0
//
// clsbench: command line front end. Pipeline commands read an INI run
// manifest; serve, loadtest and abtest take plain flags.
#include <cstdio>

#include "CLI11.hpp"
#include "clsbench/abtest.hpp"
#include "clsbench/csv.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/loadtest.hpp"
#include "clsbench/pipeline.hpp"
#include "clsbench/serve.hpp"

using namespace clsbench;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void print_rows(const CsvRows& rows) {
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) line += (i ? "," : "") + r[i];
    std::printf("%s\n", line.c_str());
  }
}

void emit_rows(const CsvRows& rows, const std::string& out) {
  if (out.empty()) {
    print_rows(rows);
  } else {
    write_csv(out, rows);
  }
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

// ---- pipeline commands --------------------------------------------------------

void cmd_gen_corpus(const RunManifest& m) {
  const auto c = build_corpus(m);
  write_corpus(c, m.run_dir() / "corpus");
  write_stamp(m, "gen-corpus",
              {"corpus/pretrain.ndjson", "corpus/finetune.ndjson", "corpus/catalog.csv", "corpus/pool.ndjson"});
  log_line("wrote " + (m.run_dir() / "corpus").string());
}

void cmd_train_tokenizer(const RunManifest& m) {
  const auto c = read_corpus(m.run_dir() / "corpus");
  const auto vocab = build_tokenizer(m, c.pretrain);
  fs::create_directories(m.run_dir() / "tokenizer");
  vocab.save(m.run_dir() / "tokenizer" / "vocab.txt");
  write_stamp(m, "train-tokenizer", {"tokenizer/vocab.txt"});
  log_line("vocab size " + std::to_string(vocab.size()) + ", hash " + vocab.hash());
}

void cmd_adapt(const RunManifest& m, std::vector<std::string> presets) {
  if (presets.empty()) presets = m.presets;
  const auto c = read_corpus(m.run_dir() / "corpus");
  const auto vocab = Vocab::load(m.run_dir() / "tokenizer" / "vocab.txt");
  const auto seqs = pretrain_sequences(c.pretrain, vocab, m.context_length);
  std::vector<fs::path> artifacts;
  for (const auto& name : presets) {
    const auto preset = m.preset(name);
    const auto ledger = m.run_dir() / "adapt" / name / "ledger.ndjson";
    fs::create_directories(ledger.parent_path());
    fs::remove(ledger);
    const auto res = domain_adapt(DecoderModel<float>(preset.config, m.seed), seqs, m.adapt_for(name),
                                  [&](const LedgerRecord& r) { append_ledger(ledger, r); });
    artifacts.push_back(fs::path("adapt") / name / "ledger.ndjson");
    for (const auto& ck : res.checkpoints) {
      const auto path = checkpoint_path(m.run_dir(), name, ck.step);
      save_adapt_checkpoint(ck, vocab, name, path);
      artifacts.push_back(fs::relative(path, m.run_dir()));
      log_line(name + " step " + std::to_string(ck.step) + " lm_loss " + fmt(ck.eval_loss));
    }
  }
  write_stamp(m, "adapt", artifacts);
}

void cmd_finetune(const RunManifest& m, const std::string& preset, std::optional<std::uint64_t> step) {
  const auto c = read_corpus(m.run_dir() / "corpus");
  const auto vocab = Vocab::load(m.run_dir() / "tokenizer" / "vocab.txt");
  std::vector<std::uint64_t> steps;
  if (step) {
    steps.push_back(*step);
  } else {
    steps = list_checkpoints(m.run_dir(), preset);
    require(!steps.empty(), "finetune: no adapted checkpoints for preset " + preset);
  }
  const auto data = classification_data(m, c.finetune, vocab);
  const auto cfg = m.finetune_for(preset);
  std::vector<fs::path> artifacts;
  for (auto s : steps) {
    const auto src = load_adapt_checkpoint(checkpoint_path(m.run_dir(), preset, s), vocab);
    const auto r = fine_tune(src.model, data.train, data.test, cfg, c.catalog.size());
    const auto dir = finetune_dir(m.run_dir(), preset, s);
    save_finetune(r, vocab, preset, src, cfg.max_len, dir);
    artifacts.push_back(fs::relative(dir / "metrics.json", m.run_dir()));
    artifacts.push_back(fs::relative(dir / "model.ckpt", m.run_dir()));
    log_line(preset + " step " + std::to_string(s) + " cls_loss " + fmt(r.test.cls_loss) + " top1 " +
             fmt(r.test.top_k.at(1)) + " top5 " + fmt(r.test.top_k.at(5)));
  }
  write_stamp(m, "finetune-" + preset, artifacts);
}

void print_fits(const std::vector<ScalingPoint>& points) {
  for (const auto& f : standard_fits(points)) {
    std::printf("%s %s~%s slope %s intercept %s r2 %s\n", f.scope.c_str(), f.y.c_str(), f.x.c_str(),
                fmt(f.fit.slope).c_str(), fmt(f.fit.intercept).c_str(), fmt(f.fit.r_squared).c_str());
  }
}

const std::vector<fs::path> kReportFiles{"scaling/scaling_points.csv", "scaling/scaling_fits.csv"};

void cmd_scaling_report(const RunManifest& m) {
  std::vector<std::string> warnings;
  const auto points = write_scaling_report(m, read_measures(m), &warnings);
  for (const auto& w : warnings) log_line("warning: " + w);
  print_fits(points);
  write_stamp(m, "scaling-report", kReportFiles);
}

void cmd_sweep(RunManifest m, std::optional<std::size_t> workers) {
  if (workers) {
    require(*workers >= 1, "sweep: --workers must be positive");
    m.workers = *workers;
  }
  const auto points = run_sweep(m, log_line);
  print_fits(points);
  write_stamp(m, "sweep", kReportFiles);
}

// ---- serve ----------------------------------------------------------------------

struct ServeArgs {
  std::string checkpoint;
  std::string vocab;
  std::size_t max_len = 0;
  std::optional<double> mock_service_ms;
  std::size_t catalog_size = 64;
  ServerOptions server;
};

void cmd_serve(ServeArgs a) {
  auto service = std::make_shared<TemplateService>();
  Predictor predictor;
  std::function<HealthStatus()> health;
  if (a.mock_service_ms) {
    require(*a.mock_service_ms >= 0, "serve: --mock-service-ms must be non-negative");
    predictor = mock_predictor(std::chrono::microseconds(static_cast<long long>(*a.mock_service_ms * 1000)),
                               a.catalog_size);
    health = [n = a.catalog_size] { return HealthStatus{true, "ok", "mock", n}; };
  } else {
    require(!a.checkpoint.empty() && !a.vocab.empty(), "serve: --checkpoint and --vocab are required without --mock-service-ms");
    predictor = [service](const PredictRequest& r) { return service->predict_topk(r); };
    health = [service] { return service->health(); };
  }
  HttpServer server(a.server, predictor, health);
  const int port = server.start();
  log_line("listening on " + a.server.host + ":" + std::to_string(port));
  if (!a.mock_service_ms) {
    // /health answers 503 until the weights are in memory.
    service->load_files(a.checkpoint, a.vocab, a.max_len);
    log_line("loaded " + service->health().model_version);
  }
  server.run();
}

// ---- loadtest -------------------------------------------------------------------

struct LoadArgs {
  std::vector<double> rates{1, 2, 5, 10, 20};
  double duration = 300;
  std::string pool;
  std::string out;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  double window = 60;
};

void cmd_loadtest(const LoadArgs& a) {
  LoadTestPlan plan;
  plan.rates = a.rates;
  plan.duration_sec = a.duration;
  plan.pool = load_pool(a.pool);
  plan.seed = a.seed;
  require(a.window > 0, "loadtest: --window must be positive");
  const auto client = http_predict_client(a.host, a.port);
  std::vector<LatencyReport> reports;
  for (const double rate : plan.rates) {
    log_line("rate " + fmt(rate) + " rps for " + fmt(plan.duration_sec) + " s");
    const auto r = run_rate(rate, plan.duration_sec, plan.pool, plan.seed, client);
    reports.push_back(compute_report(r, a.window));
    if (!a.out.empty()) {
      CsvRows rows{{"window_start", "n", "avg", "p99", "max"}};
      for (const auto& w : window_stats(r.samples, a.window)) {
        rows.push_back({fmt(w.start_sec), std::to_string(w.n), fmt(w.mean_ms), fmt(w.p99_ms), fmt(w.max_ms)});
      }
      fs::path p(a.out);
      write_csv(p.parent_path() / (p.stem().string() + "-windows-" + fmt(rate) + p.extension().string()), rows);
    }
  }
  const auto rows = report_rows(reports);
  if (!a.out.empty()) write_csv(a.out, rows);
  print_rows(rows);
}

// ---- abtest ---------------------------------------------------------------------

void cmd_ab_summarize(const std::string& events, const std::string& out) {
  CsvRows rows{{"week_start", "n_treatment", "n_holdout", "treatment_mean", "holdout_mean", "difference"}};
  for (const auto& w : selection_time_summary(load_events(events))) {
    rows.push_back({w.week_start, std::to_string(w.n_treatment), std::to_string(w.n_holdout), fmt(w.treatment_mean),
                    fmt(w.holdout_mean), fmt(w.difference)});
  }
  emit_rows(rows, out);
}

void cmd_ab_trend(const std::string& events, const std::string& series, double alpha) {
  std::vector<double> values;
  for (const auto& w : selection_time_summary(load_events(events))) {
    std::optional<double> v = series == "treatment" ? w.treatment_mean
                              : series == "holdout" ? w.holdout_mean
                                                    : w.difference;
    if (v) values.push_back(*v);
  }
  const auto t = mann_kendall(values, alpha);
  std::printf("series,n,S,var_S,z,p_value,direction\n%s,%zu,%lld,%s,%s,%s,%s\n", series.c_str(), values.size(), t.s,
              fmt(t.var_s).c_str(), fmt(t.z).c_str(), fmt(t.p_value).c_str(),
              std::string(direction_name(t.direction)).c_str());
}

void cmd_ab_compare(const std::string& events, const std::string& a, const std::string& b,
                    const std::string& group) {
  std::vector<double> xa, xb;
  for (const auto& e : load_events(events)) {
    if (!group.empty() && group_name(e.group) != group) continue;
    if (e.model_version == a) xa.push_back(e.selection_time_sec);
    if (e.model_version == b) xb.push_back(e.selection_time_sec);
  }
  const auto r = welch_t_test(xa, xb);
  std::printf("version_a,version_b,n_a,n_b,mean_a,mean_b,t,dof,p_value\n%s,%s,%zu,%zu,%s,%s,%s,%s,%s\n", a.c_str(),
              b.c_str(), xa.size(), xb.size(), fmt(r.mean_a).c_str(), fmt(r.mean_b).c_str(), fmt(r.t_stat).c_str(),
              fmt(r.dof).c_str(), fmt(r.p_value).c_str());
}

void cmd_ab_simulate(const SimulationConfig& cfg, const std::string& out_dir) {
  const auto log = simulate_selection_log(cfg);
  fs::create_directories(out_dir);
  save_events(fs::path(out_dir) / "events.ndjson", log.events);
  save_predictions(fs::path(out_dir) / "predictions.ndjson", log.predictions);
  log_line("wrote " + std::to_string(log.events.size()) + " events to " + out_dir);
}

void cmd_ab_savings(const std::string& events, const std::string& predictions, std::size_t top_n, std::size_t k,
                    const std::string& out) {
  CsvRows rows{{"template_id", "volume", "holdout_n", "accuracy", "savings_sec"}};
  const auto ev = load_events(events);
  const auto pr = load_predictions(predictions);
  for (const auto& s : accuracy_vs_savings(ev, pr, top_n, k)) {
    rows.push_back({std::to_string(s.template_id), std::to_string(s.volume), std::to_string(s.holdout_n),
                    fmt(s.accuracy), fmt(s.savings_sec)});
  }
  emit_rows(rows, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clsbench: decoder-only LMs as discriminative classifiers"};
  app.require_subcommand(1);

  std::string manifest_path;
  auto manifest_cmd = [&](const std::string& name, const std::string& help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("-m,--manifest", manifest_path, "run manifest (INI)")->required()->check(CLI::ExistingFile);
    return c;
  };

  auto* gen = manifest_cmd("gen-corpus", "generate the synthetic corpus and request pool");
  auto* tok = manifest_cmd("train-tokenizer", "learn BPE merges from the adaptation text");
  std::vector<std::string> adapt_presets;
  auto* adapt = manifest_cmd("adapt", "domain-adapt presets and save checkpoints");
  adapt->add_option("--preset", adapt_presets, "presets to adapt (default: all in the manifest)");
  std::string ft_preset;
  std::optional<std::uint64_t> ft_step;
  auto* ft = manifest_cmd("finetune", "fine-tune a classifier from adapted checkpoints");
  ft->add_option("--preset", ft_preset, "preset name")->required();
  ft->add_option("--step", ft_step, "checkpoint step (default: every saved step)");
  std::optional<std::size_t> sweep_workers;
  auto* sweep = manifest_cmd("sweep", "run every stage for every preset and checkpoint");
  sweep->add_option("--workers", sweep_workers, "parallel fine-tunes");
  auto* report = manifest_cmd("scaling-report", "collect metrics and write fits and plots");

  ServeArgs sa;
  double serve_holdout = sa.server.holdout_fraction;
  auto* serve = app.add_subcommand("serve", "HTTP inference server");
  serve->add_option("--checkpoint", sa.checkpoint, "fine-tuned model.ckpt");
  serve->add_option("--vocab", sa.vocab, "tokenizer vocab.txt");
  serve->add_option("--max-len", sa.max_len, "context tokens (default: from checkpoint)");
  serve->add_option("--host", sa.server.host, "bind address")->capture_default_str();
  serve->add_option("--port", sa.server.port, "port, 0 picks a free one")->capture_default_str();
  serve->add_option("--queue-depth", sa.server.queue_depth, "pending inferences before 429")->capture_default_str();
  serve->add_option("--mock-service-ms", sa.mock_service_ms, "serve a fixed-time mock instead of a model");
  serve->add_option("--catalog-size", sa.catalog_size, "mock catalog size")->capture_default_str();
  serve->add_option("--events-log", sa.server.events_log, "NDJSON sink for POST /v1/events");
  serve->add_option("--predictions-log", sa.server.predictions_log, "NDJSON log of served predictions");
  serve->add_option("--holdout-fraction", serve_holdout, "share of cases assigned to holdout")->capture_default_str();

  LoadArgs la;
  auto* load = app.add_subcommand("loadtest", "open-loop load generator");
  load->add_option("--rps", la.rates, "request rates")->capture_default_str();
  load->add_option("--duration", la.duration, "seconds per rate")->capture_default_str();
  load->add_option("--pool", la.pool, "NDJSON request bodies")->required();
  load->add_option("--out", la.out, "report CSV");
  load->add_option("--host", la.host)->capture_default_str();
  load->add_option("--port", la.port)->capture_default_str();
  load->add_option("--seed", la.seed)->capture_default_str();
  load->add_option("--window", la.window, "window seconds for peak averages")->capture_default_str();

  auto* ab = app.add_subcommand("abtest", "offline analysis of selection events");
  ab->require_subcommand(1);
  std::string events, predictions, out, series = "difference", version_a, version_b, group;
  double alpha = 0.05;
  std::size_t top_n = 10, k = 5;
  auto* summ = ab->add_subcommand("summarize", "weekly mean selection time by group");
  summ->add_option("--events", events)->required()->check(CLI::ExistingFile);
  summ->add_option("--out", out, "CSV path (default: stdout)");
  auto* trend = ab->add_subcommand("trend", "Mann-Kendall test on a weekly series");
  trend->add_option("--events", events)->required()->check(CLI::ExistingFile);
  trend->add_option("--series", series)->check(CLI::IsMember({"treatment", "holdout", "difference"}))->capture_default_str();
  trend->add_option("--alpha", alpha)->capture_default_str();
  auto* cmp = ab->add_subcommand("compare", "Welch t-test of selection time between model versions");
  cmp->add_option("--events", events)->required()->check(CLI::ExistingFile);
  cmp->add_option("--a", version_a, "model_version A")->required();
  cmp->add_option("--b", version_b, "model_version B")->required();
  cmp->add_option("--group", group, "restrict to one group")->check(CLI::IsMember({"treatment", "holdout"}));
  SimulationConfig sim;
  std::string sim_out;
  auto* simc = ab->add_subcommand("simulate", "write a synthetic event and prediction log");
  simc->add_option("--out-dir", sim_out)->required();
  simc->add_option("--cases", sim.n_cases)->capture_default_str();
  simc->add_option("--templates", sim.n_templates)->capture_default_str();
  simc->add_option("--weeks", sim.weeks)->capture_default_str();
  simc->add_option("--holdout-fraction", sim.holdout_fraction)->capture_default_str();
  simc->add_option("--treatment-mean", sim.treatment_mean_sec)->capture_default_str();
  simc->add_option("--holdout-mean", sim.holdout_mean_sec)->capture_default_str();
  simc->add_option("--start-date", sim.start_date)->capture_default_str();
  simc->add_option("--seed", sim.seed)->capture_default_str();
  auto* sav = ab->add_subcommand("savings", "per-template accuracy against time saved");
  sav->add_option("--events", events)->required()->check(CLI::ExistingFile);
  sav->add_option("--predictions", predictions)->required()->check(CLI::ExistingFile);
  sav->add_option("--top-n", top_n)->capture_default_str();
  sav->add_option("--k", k)->capture_default_str();
  sav->add_option("--out", out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto manifest = [&] { return RunManifest::load(manifest_path); };
    if (*gen) cmd_gen_corpus(manifest());
    else if (*tok) cmd_train_tokenizer(manifest());
    else if (*adapt) cmd_adapt(manifest(), adapt_presets);
    else if (*ft) cmd_finetune(manifest(), ft_preset, ft_step);
    else if (*sweep) cmd_sweep(manifest(), sweep_workers);
    else if (*report) cmd_scaling_report(manifest());
    else if (*serve) {
      sa.server.holdout_fraction = serve_holdout;
      cmd_serve(sa);
    } else if (*load) cmd_loadtest(la);
    else if (*summ) cmd_ab_summarize(events, out);
    else if (*trend) cmd_ab_trend(events, series, alpha);
    else if (*cmp) cmd_ab_compare(events, version_a, version_b, group);
    else if (*simc) cmd_ab_simulate(sim, sim_out);
    else if (*sav) cmd_ab_savings(events, predictions, top_n, k, out);
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
