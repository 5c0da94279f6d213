// SPDX-License-Identifier: Apache-2.0
//
// Open-loop load generation: request i is sent at start + i/rate whatever the
// state of earlier requests, so a saturated backend shows up as queueing tail
// latency instead of a throttled client.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clsbench/csv.hpp"
#include "json.hpp"

namespace clsbench {

struct LoadTestPlan {
  std::vector<double> rates{1, 2, 5, 10, 20};
  double duration_sec = 300;
  /// Request bodies (JSON text), sampled uniformly with `seed`.
  std::vector<std::string> pool;
  std::uint64_t seed = 0;
};

enum class SampleStatus { ok, error };

struct LatencySample {
  /// Seconds from test start.
  double scheduled_sec = 0.0;
  double send_sec = 0.0;
  SampleStatus status = SampleStatus::ok;
  /// Client-measured round trip; present iff ok.
  std::optional<double> latency_ms;
  /// latency_ms reported by the server, when it sent one.
  std::optional<double> server_latency_ms;
};

struct RateResult {
  double rate = 0.0;
  double duration_sec = 0.0;
  std::vector<LatencySample> samples;
};

/// Sends one request; returns the server-measured latency or throws on
/// failure (the sample is then recorded as an error).
using RequestFn = std::function<std::optional<double>(const std::string& body)>;

/// One worker thread per in-flight request; results ordered by dispatch.
RateResult run_rate(double rate, double duration_sec, std::span<const std::string> pool, std::uint64_t seed,
                    const RequestFn& send);

std::vector<RateResult> run_load_test(const LoadTestPlan& plan, const RequestFn& send);

/// POSTs to http://host:port/v1/predict; non-2xx responses count as errors.
RequestFn http_predict_client(std::string host, int port, std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// Linear interpolation between order statistics at rank q/100 * (n-1).
double percentile(std::vector<double> values, double q);

struct LatencyStats {
  double peak_window_avg_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct WindowStat {
  double start_sec = 0.0;
  std::size_t n = 0;
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct LatencyReport {
  double rate = 0.0;
  std::size_t n_ok = 0;
  std::size_t error_count = 0;
  double achieved_rps = 0.0;
  /// Absent when no request succeeded.
  std::optional<LatencyStats> client;
  std::optional<LatencyStats> server;
};

/// Tumbling windows aligned to test start, keyed by send time.
std::vector<WindowStat> window_stats(std::span<const LatencySample> samples, double window_sec = 60.0,
                                     bool server_side = false);

LatencyReport compute_report(const RateResult& result, double window_sec = 60.0);

/// rate, avg, p99, max (client), then server columns, error_count, achieved_rps.
CsvRows report_rows(std::span<const LatencyReport> reports);

/// Reads request payloads, one JSON object per line.
std::vector<std::string> load_pool(const std::filesystem::path& path);

}  // namespace clsbench
