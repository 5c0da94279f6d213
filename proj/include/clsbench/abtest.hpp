// SPDX-License-Identifier: Apache-2.0
//
// Online analytics: holdout assignment, weekly selection-time summaries,
// Mann-Kendall trend, Welch's t-test and the accuracy-vs-savings join.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace clsbench {

enum class Group { treatment, holdout };

std::string_view group_name(Group g);
Group parse_group(std::string_view s);

/// Holdout iff hash-uniform(salt, case_id) < holdout_fraction.
Group assign_group(std::string_view case_id, double holdout_fraction, std::string_view salt);

struct SelectionEvent {
  std::string case_id;
  /// ISO-8601 UTC.
  std::string timestamp;
  Group group = Group::treatment;
  std::vector<int> shown_template_ids;
  int chosen_template_id = 0;
  double selection_time_sec = 0.0;
  std::string model_version;

  void validate() const;
};

nlohmann::json to_json(const SelectionEvent& e);
SelectionEvent event_from_json(const nlohmann::json& j);
std::vector<SelectionEvent> load_events(const std::filesystem::path& path);
void save_events(const std::filesystem::path& path, std::span<const SelectionEvent> events);

/// Server-side record of a prediction, shown or not.
struct PredictionRecord {
  std::string case_id;
  std::string timestamp;
  Group group = Group::treatment;
  std::vector<int> template_ids;
  std::vector<double> probabilities;
  std::string model_version;
};

nlohmann::json to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const nlohmann::json& j);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds);

/// Seconds since the Unix epoch for "YYYY-MM-DDTHH:MM:SS[.fff]Z".
double parse_iso8601(std::string_view ts);
std::string format_iso8601(double epoch_seconds);

struct WeekSummary {
  /// Monday of the ISO week, YYYY-MM-DD.
  std::string week_start;
  std::size_t n_treatment = 0;
  std::size_t n_holdout = 0;
  std::optional<double> treatment_mean;
  std::optional<double> holdout_mean;
  /// holdout - treatment (positive = time saved); absent unless both groups present.
  std::optional<double> difference;
};

std::vector<WeekSummary> selection_time_summary(std::span<const SelectionEvent> events);

enum class TrendDirection { increasing, decreasing, none };
std::string_view direction_name(TrendDirection d);

struct TrendResult {
  long long s = 0;
  double var_s = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  TrendDirection direction = TrendDirection::none;
};

/// Tie-corrected variance, continuity-corrected z, two-sided normal p. The
/// direction follows the sign of S when p < alpha.
TrendResult mann_kendall(std::span<const double> series, double alpha = 0.05);

struct ABResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t_stat = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Two-sided Welch test; t = (mean_a - mean_b) / se.
ABResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Student-t CDF at t with dof degrees of freedom.
double student_t_cdf(double t, double dof);

struct TemplateSavings {
  int template_id = 0;
  std::size_t volume = 0;
  std::size_t holdout_n = 0;
  /// Share of holdout selections found in the shadow top-k.
  double accuracy = 0.0;
  /// Holdout mean minus treatment mean selection time.
  double savings_sec = 0.0;
};

/// Per-template rows ordered by volume (ties by id), at most top_n. Holdout
/// events are joined to the latest shadow prediction for the case at or
/// before the event. Templates lacking holdout or treatment traffic are skipped.
std::vector<TemplateSavings> accuracy_vs_savings(std::span<const SelectionEvent> events,
                                                 std::span<const PredictionRecord> predictions, std::size_t top_n,
                                                 std::size_t k = 5);

struct SimulationConfig {
  std::size_t n_cases = 20000;
  std::size_t n_templates = 40;
  std::size_t weeks = 8;
  double holdout_fraction = 0.02;
  std::string salt = "holdout";
  double treatment_mean_sec = 13.0;
  double holdout_mean_sec = 19.0;
  double time_sd_sec = 4.0;
  /// Treatment speed-up grows with per-template model accuracy when true.
  bool accuracy_drives_savings = true;
  std::string start_date = "2024-01-01";
  std::string model_version = "sim";
  std::uint64_t seed = 0;
};

struct SimulatedLog {
  std::vector<SelectionEvent> events;
  std::vector<PredictionRecord> predictions;
};

/// Replay fixture with the shape of the online experiment.
SimulatedLog simulate_selection_log(const SimulationConfig& cfg);

}  // namespace clsbench
