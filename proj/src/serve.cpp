// SPDX-License-Identifier: Apache-2.0
#include "clsbench/serve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "clsbench/abtest.hpp"
#include "clsbench/checkpoint.hpp"
#include "clsbench/csv.hpp"
#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"
#include "httplib.h"

namespace clsbench {

using nlohmann::json;

PredictRequest parse_predict_request(const json& j) {
  try {
    PredictRequest r;
    r.case_id = j.value("case_id", std::string());
    r.k = j.value("k", 5);
    for (const auto& m : j.at("messages")) {
      r.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
    }
    require(!r.messages.empty(), "predict request: messages must not be empty");
    return r;
  } catch (const json::exception& e) {
    throw ContractError(std::string("predict request: ") + e.what());
  }
}

json to_json(const PredictResponse& r) {
  return json{{"template_ids", r.template_ids},
              {"probabilities", r.probabilities},
              {"model_version", r.model_version},
              {"latency_ms", r.latency_ms}};
}

std::vector<int> topk_indices(std::span<const double> probs, std::size_t k) {
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
    return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
  });
  idx.resize(k);
  return idx;
}

void TemplateService::load(Classifier classifier, Vocab vocab, std::size_t max_len, std::string model_version) {
  require(max_len >= 1 && max_len <= classifier.model.config().context_length,
          "serve: max_len must lie within the model's positions");
  require(vocab.size() <= classifier.model.config().vocab_size, "serve: tokenizer larger than model vocab");
  auto next = std::make_shared<const Loaded>(
      Loaded{std::move(classifier), std::move(vocab), max_len, std::move(model_version)});
  std::lock_guard lock(mu_);
  loaded_ = std::move(next);
}

void TemplateService::load_files(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab_path,
                                 std::size_t max_len) {
  const std::string bytes = read_file(checkpoint);
  auto file = CheckpointFile::deserialize(bytes);
  auto vocab = Vocab::load(vocab_path);
  require(file.vocab_hash.empty() || file.vocab_hash == vocab.hash(),
          "serve: tokenizer does not match the checkpoint (vocab hash differs)");
  require(file.find("head.weight") != nullptr, "serve: checkpoint carries no classification head");
  if (max_len == 0) max_len = file.extra.value("max_len", file.config.context_length);
  std::string version = file.extra.value("model_version", std::string());
  if (version.empty()) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    version = buf;
  }
  load(Classifier{restore_model(file), restore_head(file)}, std::move(vocab), max_len, std::move(version));
}

std::shared_ptr<const TemplateService::Loaded> TemplateService::loaded() const {
  std::lock_guard lock(mu_);
  return loaded_;
}

HealthStatus TemplateService::health() const {
  auto l = loaded();
  if (!l) return {false, "loading", "", 0};
  return {true, "ok", l->model_version, l->classifier.head.n_classes()};
}

std::vector<TokenId> TemplateService::request_tokens(const PredictRequest& req) const {
  auto l = loaded();
  if (!l) throw NotReady("model not loaded");
  require(!req.messages.empty(), "predict: messages must not be empty");
  std::vector<std::string> texts;
  texts.reserve(req.messages.size());
  for (const auto& m : req.messages) texts.push_back(m.text);
  return truncate_context(texts, l->max_len, l->vocab);
}

PredictResponse TemplateService::predict_topk(const PredictRequest& req) const {
  const auto t0 = std::chrono::steady_clock::now();
  auto l = loaded();
  if (!l) throw NotReady("model not loaded");
  const std::size_t n_classes = l->classifier.head.n_classes();
  require(req.k >= 1 && static_cast<std::size_t>(req.k) <= n_classes, "predict: k must lie in [1, catalog size]");
  const std::vector<std::vector<TokenId>> seqs{request_tokens(req)};
  const auto logits = forward_classify(l->classifier.model, l->classifier.head, TokenBatch::from_sequences(seqs));
  const auto v = logits.values();
  const float mx = *std::max_element(v.begin(), v.end());
  std::vector<double> probs(n_classes);
  double z = 0;
  for (std::size_t c = 0; c < n_classes; ++c) z += probs[c] = std::exp(static_cast<double>(v[c]) - mx);
  for (auto& p : probs) p /= z;

  PredictResponse r;
  r.template_ids = topk_indices(probs, static_cast<std::size_t>(req.k));
  for (int id : r.template_ids) r.probabilities.push_back(probs[static_cast<std::size_t>(id)]);
  r.model_version = l->model_version;
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

InferenceQueue::InferenceQueue(std::size_t depth) : depth_(depth) {
  require(depth >= 1, "queue depth must be positive");
  worker_ = std::thread([this] { run(); });
}

InferenceQueue::~InferenceQueue() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

bool InferenceQueue::try_submit(std::function<void()> job) {
  {
    std::lock_guard lock(mu_);
    if (stopping_ || jobs_.size() >= depth_) return false;
    jobs_.push_back(std::move(job));
  }
  cv_.notify_one();
  return true;
}

std::size_t InferenceQueue::pending() const {
  std::lock_guard lock(mu_);
  return jobs_.size();
}

void InferenceQueue::run() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
      if (jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
    }
    job();
  }
}

Predictor mock_predictor(std::chrono::microseconds service_time, std::size_t catalog_size, std::string model_version) {
  require(catalog_size >= 1, "mock: catalog must be non-empty");
  return [=](const PredictRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    require(!req.messages.empty(), "predict: messages must not be empty");
    require(req.k >= 1 && static_cast<std::size_t>(req.k) <= catalog_size, "predict: k must lie in [1, catalog size]");
    std::this_thread::sleep_until(t0 + service_time);
    PredictResponse r;
    for (int i = 0; i < req.k; ++i) {
      r.template_ids.push_back(i);
      r.probabilities.push_back(1.0 / static_cast<double>(catalog_size));
    }
    r.model_version = model_version;
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  };
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  return format_iso8601(static_cast<double>(ms) / 1000.0);
}

namespace {

class NdjsonSink {
 public:
  explicit NdjsonSink(std::filesystem::path path) : path_(std::move(path)) {}
  bool enabled() const { return !path_.empty(); }
  void append(const std::string& lines) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to " + path_.string());
    out << lines;
  }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& msg) { reply_json(res, status, {{"error", msg}}); }

}  // namespace

struct HttpServer::Impl {
  ServerOptions options;
  Predictor predictor;
  std::function<HealthStatus()> health;
  InferenceQueue queue;
  NdjsonSink events;
  NdjsonSink predictions;
  httplib::Server server;
  std::thread thread;
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool done = false;

  Impl(ServerOptions o, Predictor p, std::function<HealthStatus()> h)
      : options(std::move(o)),
        predictor(std::move(p)),
        health(std::move(h)),
        queue(options.queue_depth),
        events(options.events_log),
        predictions(options.predictions_log) {
    const auto threads = options.http_threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) { predict(req, res); });
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto h = health();
      reply_json(res, h.ready ? 200 : 503,
                 {{"status", h.status}, {"model_version", h.model_version}, {"catalog_size", h.catalog_size}});
    });
    server.Post("/v1/events", [this](const httplib::Request& req, httplib::Response& res) { ingest(req, res); });
    server.Get("/v1/group", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = req.get_param_value("case_id");
      if (id.empty()) return reply_error(res, 400, "case_id query parameter required");
      reply_json(res, 200,
                 {{"case_id", id},
                  {"group", group_name(assign_group(id, options.holdout_fraction, options.assignment_salt))}});
    });
  }

  void predict(const httplib::Request& req, httplib::Response& res) {
    const auto received = std::chrono::steady_clock::now();
    const auto stamp = std::chrono::system_clock::now();
    PredictRequest pr;
    try {
      pr = parse_predict_request(json::parse(req.body));
    } catch (const json::exception& e) {
      return reply_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const ContractError& e) {
      return reply_error(res, 400, e.what());
    }
    auto task = std::make_shared<std::packaged_task<PredictResponse()>>([this, pr] { return predictor(pr); });
    auto fut = task->get_future();
    if (!queue.try_submit([task] { (*task)(); })) return reply_error(res, 429, "inference queue full");
    PredictResponse out;
    try {
      out = fut.get();
    } catch (const NotReady& e) {
      return reply_error(res, 503, e.what());
    } catch (const ContractError& e) {
      return reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      return reply_error(res, 500, e.what());
    }
    // Server-side latency covers queue wait plus inference.
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - received).count();
    auto body = to_json(out);
    body["timestamp"] = iso8601_utc(stamp);
    if (predictions.enabled() && !pr.case_id.empty()) {
      PredictionRecord rec{pr.case_id, iso8601_utc(stamp),
                           assign_group(pr.case_id, options.holdout_fraction, options.assignment_salt),
                           out.template_ids, out.probabilities, out.model_version};
      try {
        predictions.append(to_json(rec).dump() + "\n");
      } catch (const IoError& e) {
        return reply_error(res, 500, e.what());
      }
    }
    reply_json(res, 200, body);
  }

  void ingest(const httplib::Request& req, httplib::Response& res) {
    std::string lines;
    std::size_t n = 0, lineno = 0;
    std::istringstream in(req.body);
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      try {
        lines += to_json(event_from_json(json::parse(line))).dump() + "\n";
        ++n;
      } catch (const std::exception& e) {
        return reply_error(res, 400, "line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (events.enabled() && n > 0) {
      try {
        events.append(lines);
      } catch (const IoError& e) {
        return reply_error(res, 500, e.what());
      }
    }
    reply_json(res, 200, {{"accepted", n}});
  }
};

HttpServer::HttpServer(ServerOptions options, Predictor predictor, std::function<HealthStatus()> health)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(predictor), std::move(health))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) throw IoError("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  impl_->thread = std::thread([this] {
    impl_->server.listen_after_bind();
    std::lock_guard lock(impl_->done_mu);
    impl_->done = true;
    impl_->done_cv.notify_all();
  });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::run() {
  if (impl_->thread.joinable()) {
    std::unique_lock lock(impl_->done_mu);
    impl_->done_cv.wait(lock, [this] { return impl_->done; });
    return;
  }
  if (!impl_->server.listen(impl_->options.host, impl_->options.port)) {
    throw IoError("cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace clsbench
