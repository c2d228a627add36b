// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/io/plots.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "catkd/error.hpp"

namespace fs = std::filesystem;

namespace catkd::io {

namespace {

using nlohmann::json;

// ------------------------------------------------------------- CAM grids --

cv::Mat to_unit_gray(const Tensor& image) {
  const int h = image.h(), w = image.w();
  cv::Mat gray(h, w, CV_32F, cv::Scalar(0));
  for (int c = 0; c < image.c(); ++c) {
    const float* p = image.plane(0, c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) gray.at<float>(y, x) += p[y * w + x];
  }
  double lo, hi;
  cv::minMaxLoc(gray, &lo, &hi);
  if (hi > lo)
    gray = (gray - lo) / (hi - lo);
  else
    gray.setTo(0.5f);
  return gray;
}

cv::Mat heat_panel(const float* map, int h, int w, const cv::Mat& gray, int side) {
  cv::Mat m(h, w, CV_32F);
  std::memcpy(m.data, map, sizeof(float) * h * w);
  double lo, hi;
  cv::minMaxLoc(m, &lo, &hi);
  if (hi > lo)
    m = (m - lo) / (hi - lo);
  else
    m.setTo(0.0f);
  cv::Mat big, heat8, color;
  cv::resize(m, big, cv::Size(side, side), 0, 0, cv::INTER_LINEAR);
  big.convertTo(heat8, CV_8U, 255.0);
  cv::applyColorMap(heat8, color, cv::COLORMAP_JET);

  cv::Mat base;
  cv::resize(gray, base, cv::Size(side, side), 0, 0, cv::INTER_LINEAR);
  cv::Mat base8, base_bgr;
  base.convertTo(base8, CV_8U, 255.0);
  cv::cvtColor(base8, base_bgr, cv::COLOR_GRAY2BGR);
  cv::Mat blended;
  cv::addWeighted(color, 0.6, base_bgr, 0.4, 0.0, blended);
  return blended;
}

}  // namespace

CamPlotInfo plot_cams(nn::Model& model, const Tensor& image, const fs::path& out_png,
                      int top_k) {
  if (image.n() != 1) fail(ErrorKind::InputShape, "plot_cams: expected a single image");
  if (top_k < 1) fail(ErrorKind::Config, "plot_cams: top_k must be at least 1");
  top_k = std::min(top_k, model.num_categories());

  const Tensor features = model.forward_features(image, /*train=*/false);
  const cam::CamStack cams = model.cams(features);
  const Mat logits = model.logits_converted_path(cams);

  // Softmax scores of row 0, then the top-k categories (ties to lower index).
  const int k = logits.cols;
  std::vector<double> p(k);
  double mx = logits(0, 0);
  for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits(0, i)));
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(logits(0, i) - mx);
    sum += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] /= sum;
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });

  const int side = 128, caption = 24, gap = 4;
  const cv::Mat gray = to_unit_gray(image);
  cv::Mat canvas(side + caption, top_k * side + (top_k - 1) * gap, CV_8UC3,
                 cv::Scalar(255, 255, 255));
  CamPlotInfo info;
  for (int i = 0; i < top_k; ++i) {
    const int cat = order[i];
    info.categories.push_back(cat);
    info.scores.push_back(p[cat]);
    cv::Mat panel = heat_panel(cams.maps.plane(0, cat), cams.height(), cams.width(), gray, side);
    panel.copyTo(canvas(cv::Rect(i * (side + gap), 0, side, side)));
    char text[64];
    std::snprintf(text, sizeof(text), "cat %d  p=%.3f", cat, p[cat]);
    cv::putText(canvas, text, cv::Point(i * (side + gap) + 4, side + caption - 7),
                cv::FONT_HERSHEY_SIMPLEX, 0.42, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
  }

  if (out_png.has_parent_path()) fs::create_directories(out_png.parent_path());
  if (!cv::imwrite(out_png.string(), canvas))
    fail(ErrorKind::Io, "plot_cams: cannot write '" + out_png.string() + "'");
  json sidecar{{"schema_version", kTableSchemaVersion},
               {"categories", info.categories},
               {"scores", info.scores},
               {"producer", cams.producer}};
  atomic_write(out_png.string() + ".json", sidecar.dump(2) + "\n");
  return info;
}

// ---------------------------------------------------------------- charts --

namespace {

struct ChartSpec {
  std::vector<std::string> columns;
  bool curve;  // polyline chart; false = grouped bars
};

const std::map<std::string, ChartSpec>& chart_registry() {
  static const std::map<std::string, ChartSpec> kCharts{
      {"producer-strength", {{"producer_accuracy", "student_accuracy"}, true}},
      {"pool-size-sweep", {{"student_accuracy"}, true}},
      {"binarize-transfer", {{"student_accuracy"}, false}},
      {"category-subset", {{"student_accuracy"}, false}},
      {"reduced-class", {{"accuracy_T", "accuracy_S"}, true}},
      {"beta-sweep", {{"student_accuracy"}, true}},
      {"normalization-ablation", {{"student_accuracy"}, false}},
      {"data-ratio", {{"ce_accuracy", "catkd_accuracy"}, true}},
      {"transferability", {{"probe_accuracy"}, false}},
      {"efficiency-report", {{"seconds_per_epoch", "accuracy"}, false}},
  };
  return kCharts;
}

const cv::Scalar kPalette[4] = {cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255),
                                cv::Scalar(44, 160, 44), cv::Scalar(40, 39, 214)};

// Plotted series: the mean row per cell when aggregates exist, otherwise the
// first run row per cell. Failed rows never plot.
void extract_series(const ResultTable& table, std::vector<std::string>& cells,
                    std::vector<std::vector<double>>& series) {
  const std::size_t cols = table.columns.size();
  series.assign(cols, {});
  bool has_mean = false;
  for (const auto& r : table.rows)
    if (r.row_kind == "mean") has_mean = true;
  const std::string want = has_mean ? "mean" : "run";
  for (const auto& r : table.rows) {
    if (r.row_kind != want) continue;
    if (std::find(cells.begin(), cells.end(), r.cell) != cells.end()) continue;
    cells.push_back(r.cell);
    for (std::size_t i = 0; i < cols; ++i) series[i].push_back(r.values[i]);
  }
}

}  // namespace

fs::path emit_plot(const ResultTable& table, const fs::path& out_dir) {
  const std::size_t slash = table.schema_id.find('/');
  const std::string kind = table.schema_id.substr(0, slash);
  const auto it = chart_registry().find(kind);
  if (it == chart_registry().end())
    fail(ErrorKind::Schema, "plot: unknown table schema '" + table.schema_id + "'");
  if (table.columns != it->second.columns) {
    std::string got;
    for (const auto& c : table.columns) got += (got.empty() ? "" : ",") + c;
    fail(ErrorKind::Schema,
         "plot: table '" + table.schema_id + "' has columns [" + got + "]");
  }

  std::vector<std::string> cells;
  std::vector<std::vector<double>> series;
  extract_series(table, cells, series);

  const int width = 720, height = 480, ml = 70, mr = 140, mt = 40, mb = 60;
  const int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar axis(60, 60, 60), grid(225, 225, 225), text(30, 30, 30);

  double vmax = 0.0;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v)) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  vmax *= 1.05;

  auto ypix = [&](double v) {
    return static_cast<int>(std::lround(y0 - (v / vmax) * (y0 - y1)));
  };
  const int n = static_cast<int>(cells.size());
  auto xpix = [&](int i) {
    if (n <= 1) return (x0 + x1) / 2;
    return x0 + static_cast<int>(std::lround(static_cast<double>(i) * (x1 - x0) / (n - 1)));
  };

  // gridlines + y tick labels
  for (int t = 0; t <= 5; ++t) {
    const double v = vmax * t / 5.0;
    const int y = ypix(v);
    cv::line(canvas, {x0, y}, {x1, y}, grid, 1, cv::LINE_AA);
    char label[32];
    std::snprintf(label, sizeof(label), "%.3g", v);
    cv::putText(canvas, label, {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, text, 1, cv::LINE_AA);
  }
  cv::line(canvas, {x0, y0}, {x1, y0}, axis, 2, cv::LINE_AA);
  cv::line(canvas, {x0, y0}, {x0, y1}, axis, 2, cv::LINE_AA);
  cv::putText(canvas, table.schema_id, {x0, mt - 14}, cv::FONT_HERSHEY_SIMPLEX, 0.55, text, 1,
              cv::LINE_AA);

  // x labels
  for (int i = 0; i < n; ++i)
    cv::putText(canvas, cells[i], {xpix(i) - 28, y0 + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                text, 1, cv::LINE_AA);

  // series
  for (std::size_t s = 0; s < series.size(); ++s) {
    const cv::Scalar color = kPalette[s % 4];
    if (it->second.curve) {
      for (int i = 0; i + 1 < n; ++i)
        cv::line(canvas, {xpix(i), ypix(series[s][i])}, {xpix(i + 1), ypix(series[s][i + 1])},
                 color, 2, cv::LINE_AA);
      for (int i = 0; i < n; ++i)
        cv::circle(canvas, {xpix(i), ypix(series[s][i])}, 4, color, cv::FILLED, cv::LINE_AA);
    } else {
      const int group = std::max(1, (x1 - x0) / std::max(1, n));
      const int bar = std::max(6, group / (2 * std::max<int>(1, series.size())));
      for (int i = 0; i < n; ++i) {
        const int cx = xpix(i) + (static_cast<int>(s) - static_cast<int>(series.size()) / 2) *
                                     (bar + 2);
        cv::rectangle(canvas, {cx, ypix(series[s][i])}, {cx + bar, y0}, color, cv::FILLED);
      }
    }
    // legend
    const int ly = mt + 18 * static_cast<int>(s);
    cv::rectangle(canvas, {x1 + 10, ly}, {x1 + 24, ly + 12}, color, cv::FILLED);
    cv::putText(canvas, table.columns[s], {x1 + 30, ly + 11}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                text, 1, cv::LINE_AA);
  }

  fs::create_directories(out_dir);
  const fs::path out_png = out_dir / (kind + ".png");
  if (!cv::imwrite(out_png.string(), canvas))
    fail(ErrorKind::Io, "emit_plot: cannot write '" + out_png.string() + "'");

  json by_column = json::object();
  for (std::size_t i = 0; i < table.columns.size(); ++i) by_column[table.columns[i]] = series[i];
  json sidecar{{"schema_version", kTableSchemaVersion},
               {"schema_id", table.schema_id},
               {"columns", table.columns},
               {"cells", cells},
               {"series", by_column}};
  atomic_write(out_png.string() + ".json", sidecar.dump(2) + "\n");
  return out_png;
}

std::vector<fs::path> emit_plots(const std::vector<ResultTable>& tables,
                                 const fs::path& out_dir) {
  std::vector<fs::path> out;
  out.reserve(tables.size());
  for (const auto& t : tables) out.push_back(emit_plot(t, out_dir));
  return out;
}

}  // namespace catkd::io
