// SPDX-License-Identifier: Apache-2.0
#include "clsbench/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "clsbench/errors.hpp"
#include "clsbench/plot.hpp"

namespace clsbench {

std::vector<ScalingPoint> collect(std::span<const CheckpointMeasure> measures, std::vector<std::string>* warnings) {
  std::vector<ScalingPoint> out;
  for (const auto& m : measures) {
    if (!m.finetune) {
      if (warnings) warnings->push_back("no fine-tune for " + m.model_name + " step " + std::to_string(m.step));
      continue;
    }
    require(m.lm_loss > 0 && m.finetune->cls_loss > 0, "collect: losses must be positive");
    ScalingPoint p;
    p.model_name = m.model_name;
    p.n_params = count_params(m.config);
    p.tokens_seen = m.tokens_seen;
    p.flops = flops_for_tokens(m.config, m.tokens_seen);
    p.lm_loss = m.lm_loss;
    p.cls_loss = m.finetune->cls_loss;
    p.top_k = m.finetune->top_k;
    out.push_back(std::move(p));
  }
  std::stable_sort(out.begin(), out.end(), [](const ScalingPoint& a, const ScalingPoint& b) {
    return std::tie(a.n_params, a.tokens_seen) < std::tie(b.n_params, b.tokens_seen);
  });
  return out;
}

FitResult fit_linear(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "fit_linear: x and y differ in length");
  require(x.size() >= 3, "fit_linear: need at least 3 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, "fit_linear: x values are all equal");
  FitResult f;
  f.n_points = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  // Constant y carries no variance to explain.
  f.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 0.0;
  return f;
}

FitResult fit_loss_vs_tokens(std::span<const ScalingPoint> points, FitKind kind) {
  require(points.size() >= 3, "fit_loss_vs_tokens: need at least 3 checkpoints");
  std::vector<double> x, y;
  for (const auto& p : points) {
    require(p.model_name == points.front().model_name, "fit_loss_vs_tokens: points span several models");
    require(p.tokens_seen > 0, "fit_loss_vs_tokens: tokens_seen must be positive");
    const auto t = static_cast<double>(p.tokens_seen);
    x.push_back(kind == FitKind::log_linear ? std::log(t) : t);
    y.push_back(p.cls_loss);
  }
  auto f = fit_linear(x, y);
  f.kind = kind;
  return f;
}

namespace {

std::vector<std::string> model_order(std::span<const ScalingPoint> points) {
  std::vector<std::string> names;
  for (const auto& p : points) {
    if (std::find(names.begin(), names.end(), p.model_name) == names.end()) names.push_back(p.model_name);
  }
  return names;
}

std::vector<ScalingPoint> of_model(std::span<const ScalingPoint> points, const std::string& name) {
  std::vector<ScalingPoint> out;
  for (const auto& p : points) {
    if (p.model_name == name) out.push_back(p);
  }
  return out;
}

const char* kind_name(FitKind k) { return k == FitKind::linear ? "linear" : "log-linear"; }

}  // namespace

std::vector<NamedFit> standard_fits(std::span<const ScalingPoint> points) {
  std::vector<NamedFit> fits;
  if (points.size() >= 3) {
    std::vector<double> x, y;
    for (const auto& p : points) {
      x.push_back(p.lm_loss);
      y.push_back(p.cls_loss);
    }
    if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) != x.end()) {
      fits.push_back({"pooled", "lm_loss", "cls_loss", fit_linear(x, y)});
    }
  }
  for (const auto& name : model_order(points)) {
    const auto pts = of_model(points, name);
    if (pts.size() < 3) continue;
    fits.push_back({name, "ln_tokens", "cls_loss", fit_loss_vs_tokens(pts, FitKind::log_linear)});
    fits.push_back({name, "tokens", "cls_loss", fit_loss_vs_tokens(pts, FitKind::linear)});
  }
  return fits;
}

std::vector<std::string> point_columns() {
  return {"model_name", "n_params", "tokens_seen", "flops", "lm_loss", "cls_loss", "top1", "top3", "top5"};
}

CsvRows points_to_rows(std::span<const ScalingPoint> points) {
  CsvRows rows{point_columns()};
  auto topk = [](const ScalingPoint& p, int k) {
    auto it = p.top_k.find(k);
    return it == p.top_k.end() ? std::string() : format_double(it->second);
  };
  for (const auto& p : points) {
    rows.push_back({p.model_name, std::to_string(p.n_params), std::to_string(p.tokens_seen), format_double(p.flops),
                    format_double(p.lm_loss), format_double(p.cls_loss), topk(p, 1), topk(p, 3), topk(p, 5)});
  }
  return rows;
}

std::vector<ScalingPoint> read_points_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  require(!rows.empty() && rows.front() == point_columns(), "scaling csv: unexpected header in " + path.string());
  std::vector<ScalingPoint> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    require(row.size() == 9, "scaling csv: row " + std::to_string(r) + " has wrong width");
    ScalingPoint p;
    p.model_name = row[0];
    p.n_params = std::stoull(row[1]);
    p.tokens_seen = std::stoull(row[2]);
    p.flops = parse_double(row[3]);
    p.lm_loss = parse_double(row[4]);
    p.cls_loss = parse_double(row[5]);
    const int ks[] = {1, 3, 5};
    for (int i = 0; i < 3; ++i) {
      if (!row[6 + i].empty()) p.top_k[ks[i]] = parse_double(row[6 + i]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void emit_report(std::span<const ScalingPoint> points, std::span<const NamedFit> fits,
                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_csv(dir / "scaling_points.csv", points_to_rows(points));

  CsvRows fit_rows{{"scope", "x", "y", "kind", "slope", "intercept", "r_squared", "n_points"}};
  for (const auto& f : fits) {
    fit_rows.push_back({f.scope, f.x, f.y, kind_name(f.fit.kind), format_double(f.fit.slope),
                        format_double(f.fit.intercept), format_double(f.fit.r_squared),
                        std::to_string(f.fit.n_points)});
  }
  write_csv(dir / "scaling_fits.csv", fit_rows);
  if (points.empty()) return;

  struct View {
    const char* suffix;
    const char* x_label;
    bool log_x;
    std::function<double(const ScalingPoint&)> x;
  };
  const View views[] = {
      {"flops", "FLOPs", true, [](const ScalingPoint& p) { return p.flops; }},
      {"tokens", "tokens seen", true, [](const ScalingPoint& p) { return static_cast<double>(p.tokens_seen); }},
      {"lmloss", "language modeling loss", false, [](const ScalingPoint& p) { return p.lm_loss; }},
  };
  for (const auto& v : views) {
    std::vector<PlotSeries> loss, top5;
    for (const auto& name : model_order(points)) {
      PlotSeries l{name, {}}, a{name, {}};
      for (const auto& p : of_model(points, name)) {
        l.xy.emplace_back(v.x(p), p.cls_loss);
        if (auto it = p.top_k.find(5); it != p.top_k.end()) a.xy.emplace_back(v.x(p), it->second);
      }
      loss.push_back(std::move(l));
      if (!a.xy.empty()) top5.push_back(std::move(a));
    }
    write_file(dir / (std::string("scaling_loss_vs_") + v.suffix + ".svg"),
               render_svg(loss, {v.x_label, "classification loss", v.log_x}));
    if (!top5.empty()) {
      write_file(dir / (std::string("scaling_top5_vs_") + v.suffix + ".svg"),
                 render_svg(top5, {v.x_label, "top-5 accuracy", v.log_x}));
    }
  }
}

}  // namespace clsbench
