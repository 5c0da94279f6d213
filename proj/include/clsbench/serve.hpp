// SPDX-License-Identifier: Apache-2.0
//
// Template-suggestion service. Inference runs on one worker per replica fed
// by a bounded queue; the HTTP layer is concurrent and answers 429 when the
// queue is full instead of letting latency grow without bound.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "clsbench/corpus.hpp"
#include "clsbench/train.hpp"
#include "json.hpp"

namespace clsbench {

struct ChatMessage {
  Role role = Role::customer;
  std::string text;
};

struct PredictRequest {
  std::string case_id;
  std::vector<ChatMessage> messages;
  int k = 5;
};

struct PredictResponse {
  std::vector<int> template_ids;
  std::vector<double> probabilities;
  std::string model_version;
  double latency_ms = 0.0;
};

PredictRequest parse_predict_request(const nlohmann::json& j);
nlohmann::json to_json(const PredictResponse& r);

/// Raised when a request arrives before a model is loaded.
class NotReady : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HealthStatus {
  bool ready = false;
  std::string status;
  std::string model_version;
  std::size_t catalog_size = 0;
};

/// Top-k over softmax probabilities; ties go to the lower template id.
std::vector<int> topk_indices(std::span<const double> probs, std::size_t k);

class TemplateService {
 public:
  TemplateService() = default;

  void load(Classifier classifier, Vocab vocab, std::size_t max_len, std::string model_version);
  /// Reads a fine-tuned checkpoint (backbone + head) and its tokenizer.
  void load_files(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab_path,
                  std::size_t max_len);

  HealthStatus health() const;

  /// Same truncation as training; batch size 1.
  PredictResponse predict_topk(const PredictRequest& req) const;

  /// Model input for the request (exposed for train/serve skew checks).
  std::vector<TokenId> request_tokens(const PredictRequest& req) const;

 private:
  struct Loaded {
    Classifier classifier;
    Vocab vocab;
    std::size_t max_len;
    std::string model_version;
  };
  std::shared_ptr<const Loaded> loaded() const;

  mutable std::mutex mu_;
  std::shared_ptr<const Loaded> loaded_;
};

/// Single worker draining a bounded FIFO.
class InferenceQueue {
 public:
  explicit InferenceQueue(std::size_t depth);
  ~InferenceQueue();
  InferenceQueue(const InferenceQueue&) = delete;
  InferenceQueue& operator=(const InferenceQueue&) = delete;

  /// False when `depth` jobs are already waiting.
  bool try_submit(std::function<void()> job);
  std::size_t pending() const;

 private:
  void run();

  const std::size_t depth_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> jobs_;
  bool stopping_ = false;
  std::thread worker_;
};

using Predictor = std::function<PredictResponse(const PredictRequest&)>;

/// Stand-in backend that holds the worker for a fixed service time.
Predictor mock_predictor(std::chrono::microseconds service_time, std::size_t catalog_size,
                         std::string model_version = "mock");

/// ISO-8601 UTC with millisecond precision, e.g. 2024-01-02T03:04:05.678Z.
std::string iso8601_utc(std::chrono::system_clock::time_point t);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t queue_depth = 256;
  /// HTTP connection threads; requests waiting on the queue hold one each.
  std::size_t http_threads = 128;
  /// NDJSON sinks; empty disables.
  std::filesystem::path events_log;
  std::filesystem::path predictions_log;
  double holdout_fraction = 0.02;
  std::string assignment_salt = "holdout";
};

/// Routes:
///   POST /v1/predict   PredictRequest JSON -> PredictResponse JSON
///   GET  /health       readiness (503 until a model is loaded)
///   POST /v1/events    NDJSON SelectionEvents, appended to events_log
///   GET  /v1/group     ?case_id=... -> {"case_id", "group"}
class HttpServer {
 public:
  HttpServer(ServerOptions options, Predictor predictor, std::function<HealthStatus()> health);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Serves until stop(). After start() this only waits for the
  /// background listener; otherwise it binds and serves on this thread.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace clsbench
