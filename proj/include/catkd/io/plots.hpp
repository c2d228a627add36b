// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "catkd/io/persist.hpp"
#include "catkd/nn/model.hpp"
#include "catkd/tensor.hpp"

namespace catkd::io {

// What a CAM heatmap figure rendered: which categories made the grid and
// their prediction scores, in display order.
struct CamPlotInfo {
  std::vector<int> categories;
  std::vector<double> scores;
};

/// Heatmap grid of the model's strongest category maps for one image (the
/// top-k prediction scores captioned under each panel). Writes a PNG plus a
/// `.json` sidecar with the plotted categories and scores.
CamPlotInfo plot_cams(nn::Model& model, const Tensor& image,
                      const std::filesystem::path& out_png, int top_k = 4);

/// Figure for one result table. The filename is deterministic —
/// `<kind>.png` under `out_dir` — and a `.json` sidecar carries the exact
/// plotted series so charts can be audited against their tables. The table's
/// schema must match its kind (columns included) or a schema error is raised.
/// An empty table yields an axes-only figure.
std::filesystem::path emit_plot(const ResultTable& table,
                                const std::filesystem::path& out_dir);

/// One figure per table; returns the paths written.
std::vector<std::filesystem::path> emit_plots(const std::vector<ResultTable>& tables,
                                              const std::filesystem::path& out_dir);

}  // namespace catkd::io
