// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catkd/io/config.hpp"
#include "catkd/io/persist.hpp"

namespace catkd::experiments {

// The ablation families the toolkit reproduces. Each kind fixes its table
// schema; the grid varies exactly one axis of the run config.
enum class PlanKind {
  producer_strength,      // transfer from producers of increasing accuracy
  pool_size_sweep,        // transfer maps pooled to various resolutions
  binarize_transfer,      // raw vs binarized maps
  category_subset,        // transfer all vs top-n vs bottom-n categories
  reduced_class,          // train on a class subset, evaluate full + held-out
  beta_sweep,             // composite loss weight
  normalization_ablation, // map normalization on/off
  data_ratio,             // CE vs composite at reduced data fractions
  transferability,        // linear-probe features on held-out classes
  efficiency_report,      // per-epoch wall clock and accuracy per method
};

const char* to_string(PlanKind k);
PlanKind plan_kind_from(const std::string& s);

// One grid cell: a label for the table plus a partial config merged over the
// plan's base config.
struct GridCell {
  std::string label;
  nlohmann::json patch;
};

struct ExperimentPlan {
  PlanKind kind = PlanKind::beta_sweep;
  io::RunConfig base;
  std::vector<GridCell> grid;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  std::string schema_id() const { return std::string(to_string(kind)) + "/v1"; }
};

/// Fixed column set of a kind's result table.
std::vector<std::string> plan_columns(PlanKind kind);

/// The desk-scale default grid for a kind, layered over `base`.
ExperimentPlan default_plan(PlanKind kind, io::RunConfig base);

/// Fully resolved, validated config of one (cell, seed). The run seed lands
/// in the student schedule only; the producer's schedule keeps the base seed,
/// so every seed of a cell reuses one cached teacher. Throws on configs that
/// do not resolve — the plan invariant, checked before anything runs.
io::RunConfig resolve_cell(const ExperimentPlan& plan, const GridCell& cell,
                           std::uint64_t seed);

/// The dataset specs a run config implies: its training split as written,
/// and the full test split (class subsets and ratio reductions never apply
/// to evaluation).
data::DatasetSpec train_spec(const io::RunConfig& cfg);
data::DatasetSpec eval_spec(const io::RunConfig& cfg);

/// The frozen producer for a config: loads `teacher_checkpoint` when set,
/// otherwise trains the teacher described by the config (on the unreduced
/// dataset — class/ratio reductions shape the transfer set, never the
/// producer) and caches the checkpoint under `<cache_root>/checkpoints/`,
/// keyed by the teacher-relevant config hash.
nn::Model obtain_teacher(const io::RunConfig& cfg, const std::filesystem::path& cache_root,
                         std::ostream* progress = nullptr);

/// Executes the grid: one table row per (cell, seed), then mean/std aggregate
/// rows per cell. Completed cells are skipped by config hash (markers under
/// `out_dir`), so rerunning a finished plan trains nothing. A failing cell is
/// recorded as a `failed` row and the sweep continues. Artifacts: the result
/// table at `<out_dir>/<kind>.csv`, per-run manifests and metric tables under
/// `<out_dir>/runs/<hash>/`, teacher checkpoints under `<out_dir>/checkpoints/`.
io::ResultTable run_plan(const ExperimentPlan& plan, const std::string& out_dir,
                         std::ostream* progress = nullptr);

bool any_failed(const io::ResultTable& table);

/// Per-method timing + accuracy (the efficiency comparison): one row per
/// method in {ce, kd-baseline, catkd}, columns seconds_per_epoch / accuracy.
io::ResultTable efficiency_report(const io::RunConfig& base,
                                  const std::vector<std::string>& methods,
                                  std::ostream* progress = nullptr);

/// Recomputes mean/std aggregates from the raw `run` rows (the oracle the
/// aggregate rows are checked against).
std::vector<io::ResultRow> recompute_aggregates(const io::ResultTable& table);

}  // namespace catkd::experiments
