// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clsbench/csv.hpp"
#include "clsbench/model.hpp"
#include "clsbench/train.hpp"

namespace clsbench {

struct ScalingPoint {
  std::string model_name;
  std::uint64_t n_params = 0;
  std::uint64_t tokens_seen = 0;
  double flops = 0.0;
  double lm_loss = 0.0;
  double cls_loss = 0.0;
  std::map<int, double> top_k;

  bool operator==(const ScalingPoint&) const = default;
};

/// One adapted checkpoint and, when it ran, the fine-tune measured from it.
struct CheckpointMeasure {
  std::string model_name;
  ModelConfig config;
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  double lm_loss = 0.0;
  std::optional<EvalMetrics> finetune;
};

/// Points ordered by (n_params, tokens_seen). Checkpoints without a fine-tune
/// are skipped and named in `warnings`.
std::vector<ScalingPoint> collect(std::span<const CheckpointMeasure> measures,
                                  std::vector<std::string>* warnings = nullptr);

enum class FitKind { linear, log_linear };

struct FitResult {
  FitKind kind = FitKind::linear;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;
};

/// Ordinary least squares of y on x.
FitResult fit_linear(std::span<const double> x, std::span<const double> y);

/// cls_loss against ln(tokens) (log_linear) or raw tokens (linear) for the
/// checkpoints of a single model.
FitResult fit_loss_vs_tokens(std::span<const ScalingPoint> points, FitKind kind = FitKind::log_linear);

struct NamedFit {
  /// Model name, or "pooled".
  std::string scope;
  std::string x;
  std::string y;
  FitResult fit;
};

/// Pooled cls_loss vs lm_loss plus per-model cls_loss vs tokens fits (both
/// axis scalings). Models with fewer than three points are left out.
std::vector<NamedFit> standard_fits(std::span<const ScalingPoint> points);

std::vector<std::string> point_columns();
CsvRows points_to_rows(std::span<const ScalingPoint> points);
std::vector<ScalingPoint> read_points_csv(const std::filesystem::path& path);

/// Writes scaling_points.csv, scaling_fits.csv and the SVG views into `dir`.
/// With no points only the CSV headers are written.
void emit_report(std::span<const ScalingPoint> points, std::span<const NamedFit> fits,
                 const std::filesystem::path& dir);

}  // namespace clsbench
