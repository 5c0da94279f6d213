// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "clsbench/errors.hpp"
#include "clsbench/loadtest.hpp"
#include "clsbench/rng.hpp"
#include "clsbench/serve.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clsbench;

namespace {

LatencySample ok_at(double send, double ms) {
  LatencySample s;
  s.scheduled_sec = send;
  s.send_sec = send;
  s.latency_ms = ms;
  s.server_latency_ms = ms / 2;
  return s;
}

RateResult result_of(std::vector<LatencySample> samples, double duration) { return {1.0, duration, std::move(samples)}; }

const std::vector<std::string> kPool{"{\"a\":1}", "{\"a\":2}", "{\"a\":3}"};

}  // namespace

TEST_CASE("percentile uses linear interpolation") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(percentile(v, 99) == doctest::Approx(99.01));
  CHECK(percentile(v, 0) == 1);
  CHECK(percentile(v, 100) == 100);
  CHECK(percentile(v, 50) == doctest::Approx(50.5));
  CHECK(percentile({7}, 99) == 7);
  CHECK_THROWS_AS(percentile({}, 50), ContractError);
  CHECK_THROWS_AS(percentile(v, 101), ContractError);
}

TEST_CASE("report on identical samples") {
  std::vector<LatencySample> s;
  for (int i = 0; i < 100; ++i) s.push_back(ok_at(i * 0.5, 10));
  const auto r = compute_report(result_of(s, 50));
  REQUIRE(r.client);
  CHECK(r.client->peak_window_avg_ms == doctest::Approx(10));
  CHECK(r.client->p99_ms == doctest::Approx(10));
  CHECK(r.client->max_ms == 10);
  CHECK(r.server->max_ms == 5);
  CHECK(r.n_ok == 100);
  CHECK(r.error_count == 0);
  CHECK(r.achieved_rps == 2.0);
}

TEST_CASE("an outlier raises max and its own window only") {
  std::vector<LatencySample> s;
  for (int i = 0; i < 120; ++i) s.push_back(ok_at(i, i == 90 ? 500 : 10));
  const auto r = compute_report(result_of(s, 120));
  CHECK(r.client->max_ms == 500);
  const auto w = window_stats(s);
  REQUIRE(w.size() == 2);
  CHECK(w[0].mean_ms == doctest::Approx(10));
  CHECK(w[1].mean_ms == doctest::Approx((59 * 10 + 500) / 60.0));
  CHECK(r.client->peak_window_avg_ms == doctest::Approx(w[1].mean_ms));
}

TEST_CASE("report invariants on random samples") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LatencySample> s;
    const std::size_t n = 1 + rng.below(300);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = ok_at(rng.uniform() * 300, 1 + 100 * rng.uniform() * rng.uniform());
      if (rng.bernoulli(0.1)) {
        x.status = SampleStatus::error;
        x.latency_ms.reset();
        x.server_latency_ms.reset();
      }
      s.push_back(x);
    }
    const auto a = compute_report(result_of(s, 300));
    const auto b = compute_report(result_of(s, 300));
    const std::vector<LatencyReport> ra{a}, rb{b};
    REQUIRE(report_rows(ra) == report_rows(rb));
    REQUIRE(a.n_ok + a.error_count == n);
    if (!a.client) continue;
    REQUIRE(a.client->p99_ms <= a.client->max_ms);
    REQUIRE(a.client->peak_window_avg_ms <= a.client->max_ms);
    for (const auto& w : window_stats(s)) {
      if (w.n) REQUIRE(w.mean_ms <= a.client->max_ms);
    }
  }
}

TEST_CASE("all-error runs report counts only") {
  LatencySample e;
  e.status = SampleStatus::error;
  const auto r = compute_report(result_of({e, e}, 2));
  CHECK_FALSE(r.client.has_value());
  CHECK(r.error_count == 2);
  const std::vector<LatencyReport> rs{r};
  const auto rows = report_rows(rs);
  CHECK(rows[0] == std::vector<std::string>{"rate", "avg", "p99", "max", "server_avg", "server_p99", "server_max",
                                            "error_count", "achieved_rps"});
  CHECK(rows[1][1].empty());
  CHECK(rows[1][7] == "2");
}

TEST_CASE("schedule dispatches rate x duration requests") {
  std::atomic<int> calls{0};
  auto fake = [&](const std::string&) -> std::optional<double> {
    ++calls;
    return 0.1;
  };
  const auto r = run_rate(5, 60, kPool, 1, fake);
  CHECK(r.samples.size() == 300);
  CHECK(calls.load() == 300);
  for (std::size_t i = 0; i < r.samples.size(); ++i) CHECK(r.samples[i].scheduled_sec == doctest::Approx(i / 5.0));
}

TEST_CASE("dispatch is open loop and errors are recorded") {
  std::mutex mu;
  std::vector<std::string> bodies;
  auto slow = [&](const std::string& body) -> std::optional<double> {
    {
      std::lock_guard lock(mu);
      bodies.push_back(body);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    if (body == kPool[2]) throw IoError("boom");
    return std::nullopt;
  };
  const auto r = run_rate(40, 1.0, kPool, 9, slow);
  REQUIRE(r.samples.size() == 40);
  double drift = 0;
  for (const auto& s : r.samples) {
    drift += s.send_sec - s.scheduled_sec;
    CHECK(s.send_sec - s.scheduled_sec < 0.05);
    if (s.status == SampleStatus::ok) {
      CHECK(*s.latency_ms >= 300);
      CHECK_FALSE(s.server_latency_ms.has_value());
    } else {
      CHECK_FALSE(s.latency_ms.has_value());
    }
  }
  // Every request waits 300 ms, so a closed loop would need 12 s for 40 sends.
  CHECK(r.samples.back().send_sec < 1.1);
  CHECK(drift / 40 < 0.005);
  const auto rep = compute_report(r);
  CHECK(rep.error_count == static_cast<std::size_t>(std::count(bodies.begin(), bodies.end(), kPool[2])));
  CHECK(rep.error_count > 0);

  // Same seed draws the same payload sequence.
  std::vector<std::string> first;
  {
    std::lock_guard lock(mu);
    bodies.clear();
  }
  auto record = [&](const std::string& body) -> std::optional<double> {
    std::lock_guard lock(mu);
    bodies.push_back(body);
    return 1.0;
  };
  run_rate(200, 0.1, kPool, 3, record);
  first = bodies;
  bodies.clear();
  run_rate(200, 0.1, kPool, 3, record);
  std::sort(first.begin(), first.end());
  std::sort(bodies.begin(), bodies.end());
  CHECK(first == bodies);

  CHECK_THROWS_AS(run_rate(0, 1, kPool, 0, record), ContractError);
  CHECK_THROWS_AS(run_rate(1, 1, std::vector<std::string>{}, 0, record), ContractError);
}

TEST_CASE("fixed service time without queueing shows up as the average") {
  ServerOptions opts;
  opts.port = 0;
  HttpServer server(opts, mock_predictor(std::chrono::milliseconds(10), 8),
                    [] { return HealthStatus{true, "ok", "mock", 8}; });
  const int port = server.start();
  LoadTestPlan plan;
  plan.rates = {2};
  plan.duration_sec = 3;
  plan.pool = {R"({"case_id":"a","messages":[{"role":"CUSTOMER","text":"hi"}]})"};
  const auto results = run_load_test(plan, http_predict_client("127.0.0.1", port));
  const auto r = compute_report(results[0]);
  REQUIRE(r.server);
  CHECK(r.error_count == 0);
  CHECK(r.server->peak_window_avg_ms >= 10);
  CHECK(r.server->peak_window_avg_ms < 15);
  CHECK(r.client->peak_window_avg_ms >= r.server->peak_window_avg_ms);
  CHECK(r.client->peak_window_avg_ms < 30);
  server.stop();
}

TEST_CASE("request pool file") {
  testing::ScratchDir dir("pool");
  {
    std::ofstream out(dir.path() / "pool.ndjson");
    out << "{\"x\":1}\n\n{\"x\":2}\n";
  }
  CHECK(load_pool(dir.path() / "pool.ndjson").size() == 2);
  {
    std::ofstream out(dir.path() / "bad.ndjson");
    out << "{\"x\":1}\nnot json\n";
  }
  CHECK_THROWS_AS(load_pool(dir.path() / "bad.ndjson"), ContractError);
  CHECK_THROWS_AS(load_pool(dir.path() / "none.ndjson"), IoError);
}
