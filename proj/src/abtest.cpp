// SPDX-License-Identifier: Apache-2.0
#include "clsbench/abtest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench {

using nlohmann::json;

std::string_view group_name(Group g) { return g == Group::holdout ? "holdout" : "treatment"; }

Group parse_group(std::string_view s) {
  if (s == "treatment") return Group::treatment;
  if (s == "holdout") return Group::holdout;
  throw ContractError("unknown group '" + std::string(s) + "'");
}

Group assign_group(std::string_view case_id, double holdout_fraction, std::string_view salt) {
  require(holdout_fraction >= 0 && holdout_fraction < 1, "assign_group: fraction must lie in [0,1)");
  std::string key(salt);
  key += ':';
  key += case_id;
  Rng mix(fnv1a(key));
  return mix.uniform() < holdout_fraction ? Group::holdout : Group::treatment;
}

void SelectionEvent::validate() const {
  require(!case_id.empty(), "event: empty case_id");
  require(selection_time_sec > 0 && std::isfinite(selection_time_sec), "event: selection_time_sec must be positive");
  require(group != Group::holdout || shown_template_ids.empty(), "event: holdout events must not list shown templates");
  require(chosen_template_id >= 0, "event: negative template id");
  parse_iso8601(timestamp);
}

json to_json(const SelectionEvent& e) {
  return json{{"case_id", e.case_id},
              {"timestamp", e.timestamp},
              {"group", group_name(e.group)},
              {"shown_template_ids", e.shown_template_ids},
              {"chosen_template_id", e.chosen_template_id},
              {"selection_time_sec", e.selection_time_sec},
              {"model_version", e.model_version}};
}

SelectionEvent event_from_json(const json& j) {
  try {
    SelectionEvent e;
    e.case_id = j.at("case_id").get<std::string>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.group = parse_group(j.at("group").get<std::string>());
    e.shown_template_ids = j.value("shown_template_ids", std::vector<int>{});
    e.chosen_template_id = j.at("chosen_template_id").get<int>();
    e.selection_time_sec = j.at("selection_time_sec").get<double>();
    e.model_version = j.value("model_version", std::string());
    e.validate();
    return e;
  } catch (const json::exception& ex) {
    throw ContractError(std::string("event: ") + ex.what());
  }
}

json to_json(const PredictionRecord& p) {
  return json{{"case_id", p.case_id},         {"timestamp", p.timestamp},
              {"group", group_name(p.group)}, {"template_ids", p.template_ids},
              {"probabilities", p.probabilities}, {"model_version", p.model_version}};
}

PredictionRecord prediction_from_json(const json& j) {
  try {
    PredictionRecord p;
    p.case_id = j.at("case_id").get<std::string>();
    p.timestamp = j.at("timestamp").get<std::string>();
    p.group = parse_group(j.value("group", std::string("treatment")));
    p.template_ids = j.at("template_ids").get<std::vector<int>>();
    p.probabilities = j.value("probabilities", std::vector<double>{});
    p.model_version = j.value("model_version", std::string());
    parse_iso8601(p.timestamp);
    return p;
  } catch (const json::exception& ex) {
    throw ContractError(std::string("prediction: ") + ex.what());
  }
}

namespace {

template <typename T, typename F>
std::vector<T> load_ndjson(const std::filesystem::path& path, F parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw ContractError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    out.push_back(parse(j));
  }
  return out;
}

template <typename T>
void save_ndjson(const std::filesystem::path& path, std::span<const T> items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& it : items) out << to_json(it).dump() << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

int parse_int(std::string_view s, std::size_t pos, std::size_t len) {
  int v = 0;
  require(pos + len <= s.size(), "timestamp too short");
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  require(ec == std::errc() && p == s.data() + pos + len, "timestamp: bad number");
  return v;
}

}  // namespace

std::vector<SelectionEvent> load_events(const std::filesystem::path& path) {
  return load_ndjson<SelectionEvent>(path, event_from_json);
}

void save_events(const std::filesystem::path& path, std::span<const SelectionEvent> events) {
  save_ndjson(path, events);
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  return load_ndjson<PredictionRecord>(path, prediction_from_json);
}

void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds) {
  save_ndjson(path, preds);
}

double parse_iso8601(std::string_view ts) {
  using namespace std::chrono;
  try {
    require(ts.size() >= 20 && ts[4] == '-' && ts[7] == '-' && ts[10] == 'T' && ts[13] == ':' && ts[16] == ':' &&
                ts.back() == 'Z',
            "");
    const year_month_day ymd{year{parse_int(ts, 0, 4)}, month{static_cast<unsigned>(parse_int(ts, 5, 2))},
                             day{static_cast<unsigned>(parse_int(ts, 8, 2))}};
    require(ymd.ok(), "");
    const int hh = parse_int(ts, 11, 2), mm = parse_int(ts, 14, 2), ss = parse_int(ts, 17, 2);
    require(hh < 24 && mm < 60 && ss < 61, "");
    double frac = 0.0;
    if (ts.size() > 20) {
      require(ts[19] == '.' && ts.size() > 21, "");
      const auto digits = ts.substr(20, ts.size() - 21);
      double scale = 0.1;
      for (char c : digits) {
        require(c >= '0' && c <= '9', "");
        frac += (c - '0') * scale;
        scale /= 10;
      }
    }
    const auto days = sys_days(ymd).time_since_epoch().count();
    return static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss + frac;
  } catch (const ContractError&) {
    throw ContractError("bad ISO-8601 UTC timestamp '" + std::string(ts) + "'");
  }
}

std::string format_iso8601(double epoch_seconds) {
  using namespace std::chrono;
  const auto total_ms = static_cast<long long>(std::llround(epoch_seconds * 1000.0));
  long long days = total_ms / 86400000;
  long long rem = total_ms % 86400000;
  if (rem < 0) {
    rem += 86400000;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), rem / 3600000,
                rem / 60000 % 60, rem / 1000 % 60, rem % 1000);
  return buf;
}

std::vector<WeekSummary> selection_time_summary(std::span<const SelectionEvent> events) {
  using namespace std::chrono;
  require(!events.empty(), "summary: no events");
  struct Acc {
    double sum_t = 0, sum_h = 0;
    std::size_t n_t = 0, n_h = 0;
  };
  std::map<long long, Acc> weeks;
  for (const auto& e : events) {
    const auto day = static_cast<long long>(std::floor(parse_iso8601(e.timestamp) / 86400.0));
    // 1970-01-01 was a Thursday; shift so weeks start on Monday.
    const long long monday = day - ((day + 3) % 7 + 7) % 7;
    auto& a = weeks[monday];
    if (e.group == Group::holdout) {
      a.sum_h += e.selection_time_sec;
      ++a.n_h;
    } else {
      a.sum_t += e.selection_time_sec;
      ++a.n_t;
    }
  }
  std::vector<WeekSummary> out;
  for (const auto& [monday, a] : weeks) {
    WeekSummary w;
    w.week_start = format_iso8601(static_cast<double>(monday) * 86400.0).substr(0, 10);
    w.n_treatment = a.n_t;
    w.n_holdout = a.n_h;
    if (a.n_t) w.treatment_mean = a.sum_t / static_cast<double>(a.n_t);
    if (a.n_h) w.holdout_mean = a.sum_h / static_cast<double>(a.n_h);
    if (a.n_t && a.n_h) w.difference = *w.holdout_mean - *w.treatment_mean;
    out.push_back(std::move(w));
  }
  return out;
}

std::string_view direction_name(TrendDirection d) {
  switch (d) {
    case TrendDirection::increasing:
      return "increasing";
    case TrendDirection::decreasing:
      return "decreasing";
    default:
      return "none";
  }
}

TrendResult mann_kendall(std::span<const double> x, double alpha) {
  const std::size_t n = x.size();
  require(n >= 3, "mann_kendall: need at least 3 values");
  TrendResult r;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) r.s += (x[j] > x[i]) - (x[j] < x[i]);
  }
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  double ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * (t - 1) * (2 * t + 5);
    i = j;
  }
  const double nd = static_cast<double>(n);
  r.var_s = (nd * (nd - 1) * (2 * nd + 5) - ties) / 18.0;
  if (r.s != 0 && r.var_s > 0) {
    const double s = static_cast<double>(r.s);
    r.z = (s > 0 ? s - 1 : s + 1) / std::sqrt(r.var_s);
  }
  r.p_value = std::erfc(std::fabs(r.z) / std::numbers::sqrt2);
  if (r.p_value < alpha) r.direction = r.s > 0 ? TrendDirection::increasing : TrendDirection::decreasing;
  return r;
}

double student_t_cdf(double t, double dof) {
  require(dof > 0, "student_t_cdf: dof must be positive");
  return boost::math::cdf(boost::math::students_t_distribution<double>(dof), t);
}

ABResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, "welch: each sample needs at least 2 values");
  auto moments = [](std::span<const double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, var_a] = moments(a);
  const auto [mb, var_b] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = var_a / na, qb = var_b / nb;
  require(qa + qb > 0, "welch: both samples have zero variance");
  ABResult r;
  r.mean_a = ma;
  r.mean_b = mb;
  r.t_stat = (ma - mb) / std::sqrt(qa + qb);
  r.dof = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
  const boost::math::students_t_distribution<double> dist(r.dof);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_stat))));
  return r;
}

std::vector<TemplateSavings> accuracy_vs_savings(std::span<const SelectionEvent> events,
                                                 std::span<const PredictionRecord> predictions, std::size_t top_n,
                                                 std::size_t k) {
  std::map<std::string, std::vector<std::pair<double, const PredictionRecord*>>> by_case;
  for (const auto& p : predictions) by_case[p.case_id].emplace_back(parse_iso8601(p.timestamp), &p);
  for (auto& [id, v] : by_case) {
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  }

  struct Acc {
    std::size_t volume = 0, n_h = 0, n_t = 0, hits = 0, joined = 0;
    double sum_h = 0, sum_t = 0;
  };
  std::map<int, Acc> per;
  for (const auto& e : events) {
    auto& a = per[e.chosen_template_id];
    ++a.volume;
    if (e.group == Group::treatment) {
      ++a.n_t;
      a.sum_t += e.selection_time_sec;
      continue;
    }
    ++a.n_h;
    a.sum_h += e.selection_time_sec;
    auto it = by_case.find(e.case_id);
    if (it == by_case.end()) continue;
    const double t = parse_iso8601(e.timestamp);
    const PredictionRecord* latest = nullptr;
    for (const auto& [pt, p] : it->second) {
      if (pt <= t) latest = p;
    }
    if (!latest) continue;
    ++a.joined;
    const auto n = std::min(k, latest->template_ids.size());
    if (std::find(latest->template_ids.begin(), latest->template_ids.begin() + static_cast<std::ptrdiff_t>(n),
                  e.chosen_template_id) != latest->template_ids.begin() + static_cast<std::ptrdiff_t>(n)) {
      ++a.hits;
    }
  }

  std::vector<TemplateSavings> rows;
  for (const auto& [id, a] : per) {
    if (a.joined == 0 || a.n_t == 0) continue;
    TemplateSavings r;
    r.template_id = id;
    r.volume = a.volume;
    r.holdout_n = a.n_h;
    r.accuracy = static_cast<double>(a.hits) / static_cast<double>(a.joined);
    r.savings_sec = a.sum_h / static_cast<double>(a.n_h) - a.sum_t / static_cast<double>(a.n_t);
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TemplateSavings& x, const TemplateSavings& y) {
    return x.volume != y.volume ? x.volume > y.volume : x.template_id < y.template_id;
  });
  if (rows.size() > top_n) rows.resize(top_n);
  return rows;
}

SimulatedLog simulate_selection_log(const SimulationConfig& cfg) {
  require(cfg.n_cases >= 1 && cfg.n_templates >= 5 && cfg.weeks >= 1, "simulate: sizes must be positive");
  require(cfg.treatment_mean_sec > 0 && cfg.holdout_mean_sec > 0 && cfg.time_sd_sec >= 0,
          "simulate: selection times must be positive");
  const double start = parse_iso8601(cfg.start_date + "T00:00:00Z");
  const double span = static_cast<double>(cfg.weeks) * 7 * 86400.0;
  Rng rng(cfg.seed ^ 0xab7e57ULL);

  // Zipf-like volume and a per-template model accuracy.
  const std::size_t T = cfg.n_templates;
  std::vector<double> weight(T), accuracy(T);
  double wsum = 0;
  for (std::size_t t = 0; t < T; ++t) {
    weight[t] = 1.0 / static_cast<double>(t + 1);
    wsum += weight[t];
    accuracy[t] = 0.3 + 0.65 * rng.uniform();
  }
  double mean_acc = 0;
  for (std::size_t t = 0; t < T; ++t) mean_acc += weight[t] / wsum * accuracy[t];
  // Time when the right template is on screen, chosen so the treatment mean
  // lands on treatment_mean_sec.
  const double gap = cfg.holdout_mean_sec - cfg.treatment_mean_sec;
  const double fast = std::max(0.5, cfg.holdout_mean_sec - gap / mean_acc);

  auto draw_template = [&] {
    double u = rng.uniform() * wsum;
    for (std::size_t t = 0; t < T; ++t) {
      if ((u -= weight[t]) < 0) return static_cast<int>(t);
    }
    return static_cast<int>(T - 1);
  };
  auto positive = [&](double mean) { return std::max(0.5, mean + cfg.time_sd_sec * rng.normal()); };

  SimulatedLog log;
  for (std::size_t c = 0; c < cfg.n_cases; ++c) {
    const std::string case_id = "sim-" + std::to_string(cfg.seed) + "-" + std::to_string(c);
    const Group g = assign_group(case_id, cfg.holdout_fraction, cfg.salt);
    const double t_pred = start + 60.0 + rng.uniform() * (span - 120.0);
    const int chosen = draw_template();
    const bool hit = rng.bernoulli(accuracy[static_cast<std::size_t>(chosen)]);

    // Top-5 shadow prediction containing (or not) the chosen template.
    std::vector<int> ids;
    const int slot = hit ? static_cast<int>(rng.below(5)) : -1;
    while (ids.size() < 5) {
      if (static_cast<int>(ids.size()) == slot) {
        ids.push_back(chosen);
        continue;
      }
      const int cand = static_cast<int>(rng.below(T));
      if (cand == chosen || std::find(ids.begin(), ids.end(), cand) != ids.end()) continue;
      ids.push_back(cand);
    }
    std::vector<double> probs(5);
    double remaining = 1.0;
    for (auto& p : probs) {
      p = remaining * (0.3 + 0.4 * rng.uniform());
      remaining -= p;
    }
    std::sort(probs.begin(), probs.end(), std::greater<>());

    double secs;
    if (g == Group::holdout) {
      secs = positive(cfg.holdout_mean_sec);
    } else if (cfg.accuracy_drives_savings) {
      secs = positive(hit ? fast : cfg.holdout_mean_sec);
    } else {
      secs = positive(cfg.treatment_mean_sec);
    }
    log.predictions.push_back({case_id, format_iso8601(t_pred), g, ids, probs, cfg.model_version});
    SelectionEvent e;
    e.case_id = case_id;
    e.timestamp = format_iso8601(t_pred + secs);
    e.group = g;
    if (g == Group::treatment) e.shown_template_ids = ids;
    e.chosen_template_id = chosen;
    e.selection_time_sec = secs;
    e.model_version = cfg.model_version;
    log.events.push_back(std::move(e));
  }
  // Emit in time order, as a live log would be.
  auto by_time = [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; };
  std::stable_sort(log.events.begin(), log.events.end(), by_time);
  std::stable_sort(log.predictions.begin(), log.predictions.end(), by_time);
  return log;
}

}  // namespace clsbench
