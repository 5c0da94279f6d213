// SPDX-License-Identifier: Apache-2.0
#include "clsbench/loadtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"
#include "httplib.h"

namespace clsbench {

using nlohmann::json;

RateResult run_rate(double rate, double duration_sec, std::span<const std::string> pool, std::uint64_t seed,
                    const RequestFn& send) {
  require(rate > 0, "loadtest: rates must be positive");
  require(duration_sec > 0, "loadtest: duration must be positive");
  require(!pool.empty(), "loadtest: empty request pool");
  using clock = std::chrono::steady_clock;
  const auto n = static_cast<std::size_t>(std::floor(rate * duration_sec + 1e-9));
  RateResult out{rate, duration_sec, std::vector<LatencySample>(n)};
  Rng rng(seed);
  std::vector<std::size_t> picks(n);
  for (auto& p : picks) p = rng.below(pool.size());

  std::vector<std::thread> workers;
  workers.reserve(n);
  const auto start = clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    const double at = static_cast<double>(i) / rate;
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(at)));
    workers.emplace_back([&, i, at] {
      auto& s = out.samples[i];
      s.scheduled_sec = at;
      const auto sent = clock::now();
      s.send_sec = std::chrono::duration<double>(sent - start).count();
      try {
        s.server_latency_ms = send(pool[picks[i]]);
        s.latency_ms = std::chrono::duration<double, std::milli>(clock::now() - sent).count();
        s.status = SampleStatus::ok;
      } catch (const std::exception&) {
        s.status = SampleStatus::error;
        s.latency_ms.reset();
        s.server_latency_ms.reset();
      }
    });
  }
  for (auto& w : workers) w.join();
  return out;
}

std::vector<RateResult> run_load_test(const LoadTestPlan& plan, const RequestFn& send) {
  require(!plan.rates.empty(), "loadtest: no rates");
  std::vector<RateResult> out;
  for (std::size_t r = 0; r < plan.rates.size(); ++r) {
    out.push_back(run_rate(plan.rates[r], plan.duration_sec, plan.pool, plan.seed + r, send));
  }
  return out;
}

RequestFn http_predict_client(std::string host, int port, std::chrono::milliseconds timeout) {
  return [host = std::move(host), port, timeout](const std::string& body) -> std::optional<double> {
    httplib::Client cli(host, port);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto res = cli.Post("/v1/predict", body, "application/json");
    if (!res) throw IoError("request failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw IoError("HTTP " + std::to_string(res->status));
    const auto j = json::parse(res->body, nullptr, false);
    if (!j.is_discarded() && j.contains("latency_ms") && j["latency_ms"].is_number()) {
      return j["latency_ms"].get<double>();
    }
    return std::nullopt;
  };
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile: no values");
  require(q >= 0 && q <= 100, "percentile: q must lie in [0,100]");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::optional<double> value_of(const LatencySample& s, bool server_side) {
  if (s.status != SampleStatus::ok) return std::nullopt;
  return server_side ? s.server_latency_ms : s.latency_ms;
}

std::optional<LatencyStats> stats_of(std::span<const LatencySample> samples, double window_sec, bool server_side) {
  std::vector<double> all;
  for (const auto& s : samples) {
    if (auto v = value_of(s, server_side)) all.push_back(*v);
  }
  if (all.empty()) return std::nullopt;
  LatencyStats st;
  st.p99_ms = percentile(all, 99);
  st.max_ms = *std::max_element(all.begin(), all.end());
  for (const auto& w : window_stats(samples, window_sec, server_side)) {
    if (w.n) st.peak_window_avg_ms = std::max(st.peak_window_avg_ms, w.mean_ms);
  }
  return st;
}

}  // namespace

std::vector<WindowStat> window_stats(std::span<const LatencySample> samples, double window_sec, bool server_side) {
  require(window_sec > 0, "window must be positive");
  std::vector<std::vector<double>> buckets;
  for (const auto& s : samples) {
    auto v = value_of(s, server_side);
    if (!v) continue;
    const auto w = static_cast<std::size_t>(std::max(0.0, std::floor(s.send_sec / window_sec)));
    if (buckets.size() <= w) buckets.resize(w + 1);
    buckets[w].push_back(*v);
  }
  std::vector<WindowStat> out;
  for (std::size_t w = 0; w < buckets.size(); ++w) {
    WindowStat st;
    st.start_sec = static_cast<double>(w) * window_sec;
    st.n = buckets[w].size();
    if (st.n) {
      double sum = 0;
      for (double v : buckets[w]) sum += v;
      st.mean_ms = sum / static_cast<double>(st.n);
      st.p99_ms = percentile(buckets[w], 99);
      st.max_ms = *std::max_element(buckets[w].begin(), buckets[w].end());
    }
    out.push_back(st);
  }
  return out;
}

LatencyReport compute_report(const RateResult& result, double window_sec) {
  LatencyReport r;
  r.rate = result.rate;
  for (const auto& s : result.samples) (s.status == SampleStatus::ok ? r.n_ok : r.error_count)++;
  r.achieved_rps = result.duration_sec > 0 ? static_cast<double>(r.n_ok) / result.duration_sec : 0.0;
  r.client = stats_of(result.samples, window_sec, false);
  r.server = stats_of(result.samples, window_sec, true);
  return r;
}

CsvRows report_rows(std::span<const LatencyReport> reports) {
  CsvRows rows{{"rate", "avg", "p99", "max", "server_avg", "server_p99", "server_max", "error_count", "achieved_rps"}};
  auto cell = [](const std::optional<LatencyStats>& s, double LatencyStats::*field) {
    return s ? format_double(std::round((*s).*field * 1000.0) / 1000.0) : std::string();
  };
  for (const auto& r : reports) {
    rows.push_back({format_double(r.rate), cell(r.client, &LatencyStats::peak_window_avg_ms),
                    cell(r.client, &LatencyStats::p99_ms), cell(r.client, &LatencyStats::max_ms),
                    cell(r.server, &LatencyStats::peak_window_avg_ms), cell(r.server, &LatencyStats::p99_ms),
                    cell(r.server, &LatencyStats::max_ms), std::to_string(r.error_count),
                    format_double(std::round(r.achieved_rps * 1000.0) / 1000.0)});
  }
  return rows;
}

std::vector<std::string> load_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    require(json::accept(line), "pool: line " + std::to_string(out.size() + 1) + " is not JSON");
    out.push_back(line);
  }
  require(!out.empty(), "pool: " + path.string() + " is empty");
  return out;
}

}  // namespace clsbench
