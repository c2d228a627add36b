// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/experiments/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>

#include "catkd/error.hpp"

namespace fs = std::filesystem;

namespace catkd::experiments {

namespace {

using nlohmann::json;

}  // namespace

const char* to_string(PlanKind k) {
  switch (k) {
    case PlanKind::producer_strength: return "producer-strength";
    case PlanKind::pool_size_sweep: return "pool-size-sweep";
    case PlanKind::binarize_transfer: return "binarize-transfer";
    case PlanKind::category_subset: return "category-subset";
    case PlanKind::reduced_class: return "reduced-class";
    case PlanKind::beta_sweep: return "beta-sweep";
    case PlanKind::normalization_ablation: return "normalization-ablation";
    case PlanKind::data_ratio: return "data-ratio";
    case PlanKind::transferability: return "transferability";
    case PlanKind::efficiency_report: return "efficiency-report";
  }
  return "?";
}

PlanKind plan_kind_from(const std::string& s) {
  static const std::map<std::string, PlanKind> kKinds{
      {"producer-strength", PlanKind::producer_strength},
      {"pool-size-sweep", PlanKind::pool_size_sweep},
      {"binarize-transfer", PlanKind::binarize_transfer},
      {"category-subset", PlanKind::category_subset},
      {"reduced-class", PlanKind::reduced_class},
      {"beta-sweep", PlanKind::beta_sweep},
      {"normalization-ablation", PlanKind::normalization_ablation},
      {"data-ratio", PlanKind::data_ratio},
      {"transferability", PlanKind::transferability},
      {"efficiency-report", PlanKind::efficiency_report},
  };
  const auto it = kKinds.find(s);
  if (it == kKinds.end()) fail(ErrorKind::Config, "unknown experiment kind '" + s + "'");
  return it->second;
}

std::vector<std::string> plan_columns(PlanKind kind) {
  switch (kind) {
    case PlanKind::producer_strength: return {"producer_accuracy", "student_accuracy"};
    case PlanKind::pool_size_sweep:
    case PlanKind::binarize_transfer:
    case PlanKind::category_subset:
    case PlanKind::beta_sweep:
    case PlanKind::normalization_ablation: return {"student_accuracy"};
    case PlanKind::reduced_class: return {"accuracy_T", "accuracy_S"};
    case PlanKind::data_ratio: return {"ce_accuracy", "catkd_accuracy"};
    case PlanKind::transferability: return {"probe_accuracy"};
    case PlanKind::efficiency_report: return {"seconds_per_epoch", "accuracy"};
  }
  return {};
}

// ------------------------------------------------------------ resolution --

io::RunConfig resolve_cell(const ExperimentPlan& plan, const GridCell& cell,
                           std::uint64_t seed) {
  json merged = io::json_merge(io::to_json(plan.base), cell.patch);
  io::RunConfig cfg;
  try {
    cfg = io::config_from_json(merged);
  } catch (const Error& e) {
    fail(ErrorKind::Config,
         "plan cell '" + cell.label + "' does not resolve: " + e.what());
  }
  // The run seed varies the student (init + shuffles), never the producer:
  // one cached teacher serves every seed, and paired-seed comparisons share
  // the identical frozen producer.
  cfg.schedule.seed = seed;
  cfg.validate();
  return cfg;
}

data::DatasetSpec train_spec(const io::RunConfig& cfg) {
  data::DatasetSpec d = cfg.dataset;
  d.split = data::Split::train;
  return d;
}

data::DatasetSpec eval_spec(const io::RunConfig& cfg) {
  data::DatasetSpec d = cfg.dataset;
  d.split = data::Split::test;
  d.subset = data::ClassSubset{};
  d.ratio = 1.0;
  d.augmentation = data::Augmentation::none;
  d.synthetic_per_class = cfg.synthetic_eval_per_class;
  return d;
}

namespace {

// The producer always pretrains on the unreduced task — class and ratio
// reductions are properties of the transfer set, not of the teacher.
data::DatasetSpec teacher_train_spec(const io::RunConfig& cfg) {
  data::DatasetSpec d = train_spec(cfg);
  d.subset = data::ClassSubset{};
  d.ratio = 1.0;
  return d;
}

// ----------------------------------------------------------------- models --

// Hash identity of the cached teacher checkpoint: only the knobs that shape
// the teacher. Student-side settings must not invalidate the cache.
io::RunConfig teacher_identity(const io::RunConfig& cfg) {
  io::RunConfig t;
  t.method = "ce";
  t.head_bias = cfg.head_bias;
  t.teacher = cfg.teacher;
  t.student = cfg.teacher;
  t.dataset = teacher_train_spec(cfg);
  t.synthetic_eval_per_class = cfg.synthetic_eval_per_class;
  t.schedule = cfg.teacher_schedule;
  t.teacher_schedule = cfg.teacher_schedule;
  return t;
}

nn::Model fresh_student(const io::RunConfig& cfg, int num_classes) {
  Rng root(cfg.schedule.seed);
  Rng init = root.derive("student-init");
  return nn::Model(cfg.student, num_classes, cfg.head_bias, init);
}

trainer::TrainSchedule probe_schedule(std::uint64_t seed) {
  trainer::TrainSchedule s;
  s.epochs = 20;
  s.batch_size = 64;
  s.lr = 0.1;
  s.weight_decay = 0.0;
  s.milestones = {12, 16};
  s.seed = seed;
  return s;
}

struct CellOutcome {
  std::vector<double> values;
  std::vector<trainer::MetricRecord> records;
};

void check_converged(const trainer::TrainResult& res) {
  if (res.diverged) fail(ErrorKind::Divergence, res.diagnostic);
}

// --------------------------------------------------------- cell execution --

CellOutcome run_cell(PlanKind kind, const io::RunConfig& cfg, const fs::path& out_dir,
                     std::ostream* progress) {
  const data::Dataset train = data::load(train_spec(cfg));
  const data::Dataset eval = data::load(eval_spec(cfg));
  CellOutcome out;

  switch (kind) {
    case PlanKind::producer_strength:
    case PlanKind::pool_size_sweep:
    case PlanKind::binarize_transfer:
    case PlanKind::category_subset: {
      nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
      nn::Model student = fresh_student(cfg, train.num_classes);
      const trainer::DistillPair pair{&teacher, &student, cfg.distill};
      const trainer::TrainResult res = trainer::train_cat(
          pair, data::LabelFreeView(train), eval, cfg.schedule, progress);
      check_converged(res);
      if (kind == PlanKind::producer_strength)
        out.values.push_back(trainer::evaluate(teacher, eval));
      out.values.push_back(res.final_accuracy);
      out.records = res.records;
      return out;
    }

    case PlanKind::reduced_class: {
      if (cfg.dataset.subset.kind != data::ClassSubset::Kind::first_n)
        fail(ErrorKind::Policy, "reduced-class cell needs a first-n dataset subset");
      nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
      nn::Model student = fresh_student(cfg, train.num_classes);
      const trainer::DistillPair pair{&teacher, &student, cfg.distill};
      const trainer::TrainResult res = trainer::train_cat(
          pair, data::LabelFreeView(train), eval, cfg.schedule, progress);
      check_converged(res);
      data::DatasetSpec held = data::held_out_complement(eval_spec(cfg), cfg.dataset.subset.n);
      const data::Dataset eval_s = data::load(held);
      // Both columns, always: accuracy on the full test set (T) and on the
      // classes the transfer never saw (S).
      out.values.push_back(res.final_accuracy);
      out.values.push_back(trainer::evaluate_converted(student, eval_s));
      out.records = res.records;
      return out;
    }

    case PlanKind::beta_sweep:
    case PlanKind::normalization_ablation: {
      nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
      nn::Model student = fresh_student(cfg, train.num_classes);
      const trainer::DistillPair pair{&teacher, &student, cfg.distill};
      const trainer::TrainResult res = trainer::train_catkd(
          pair, train, eval, cfg.schedule, cfg.dataset.augmentation, progress);
      check_converged(res);
      out.values.push_back(res.final_accuracy);
      out.records = res.records;
      return out;
    }

    case PlanKind::data_ratio: {
      nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
      nn::Model ce_student = fresh_student(cfg, train.num_classes);
      const trainer::TrainResult ce = trainer::train_ce(
          ce_student, train, eval, cfg.schedule, cfg.dataset.augmentation, progress);
      check_converged(ce);
      nn::Model kd_student = fresh_student(cfg, train.num_classes);
      const trainer::DistillPair pair{&teacher, &kd_student, cfg.distill};
      const trainer::TrainResult kd = trainer::train_catkd(
          pair, train, eval, cfg.schedule, cfg.dataset.augmentation, progress);
      check_converged(kd);
      out.values = {ce.final_accuracy, kd.final_accuracy};
      out.records = ce.records;
      out.records.insert(out.records.end(), kd.records.begin(), kd.records.end());
      return out;
    }

    case PlanKind::transferability: {
      if (cfg.dataset.subset.kind != data::ClassSubset::Kind::first_n)
        fail(ErrorKind::Policy, "transferability cell needs a first-n dataset subset");
      nn::Model student = fresh_student(cfg, train.num_classes);
      trainer::TrainResult res;
      if (cfg.method == "ce") {
        res = trainer::train_ce(student, train, eval, cfg.schedule,
                                cfg.dataset.augmentation, progress);
      } else {
        nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
        const trainer::DistillPair pair{&teacher, &student, cfg.distill};
        if (cfg.method == "cat")
          res = trainer::train_cat(pair, data::LabelFreeView(train), eval, cfg.schedule,
                                   progress);
        else if (cfg.method == "kd-baseline")
          res = trainer::train_kd_baseline(pair, train, eval, cfg.schedule,
                                           cfg.dataset.augmentation, progress);
        else
          res = trainer::train_catkd(pair, train, eval, cfg.schedule,
                                     cfg.dataset.augmentation, progress);
      }
      check_converged(res);
      // How well do the frozen features explain classes the student never
      // trained on? Probe head trained on the held-out train split.
      data::DatasetSpec probe_train = data::held_out_complement(cfg.dataset, cfg.dataset.subset.n);
      probe_train.split = data::Split::train;
      probe_train.augmentation = data::Augmentation::none;
      const data::DatasetSpec probe_eval =
          data::held_out_complement(eval_spec(cfg), cfg.dataset.subset.n);
      const data::Dataset pt = data::load(probe_train);
      const data::Dataset pe = data::load(probe_eval);
      out.values.push_back(
          trainer::linear_probe(student, pt, pe, probe_schedule(cfg.schedule.seed), progress));
      out.records = res.records;
      return out;
    }

    case PlanKind::efficiency_report: {
      trainer::TrainResult res;
      if (cfg.method == "ce") {
        nn::Model student = fresh_student(cfg, train.num_classes);
        res = trainer::train_ce(student, train, eval, cfg.schedule,
                                cfg.dataset.augmentation, progress);
      } else {
        nn::Model teacher = obtain_teacher(cfg, out_dir, progress);
        nn::Model student = fresh_student(cfg, train.num_classes);
        const trainer::DistillPair pair{&teacher, &student, cfg.distill};
        if (cfg.method == "kd-baseline")
          res = trainer::train_kd_baseline(pair, train, eval, cfg.schedule,
                                           cfg.dataset.augmentation, progress);
        else if (cfg.method == "cat")
          res = trainer::train_cat(pair, data::LabelFreeView(train), eval, cfg.schedule,
                                   progress);
        else
          res = trainer::train_catkd(pair, train, eval, cfg.schedule,
                                     cfg.dataset.augmentation, progress);
      }
      check_converged(res);
      double seconds = 0.0;
      int epochs = 0;
      for (const auto& r : res.records)
        if (r.split == "train") {
          seconds += r.seconds;
          ++epochs;
        }
      out.values = {epochs > 0 ? seconds / epochs : 0.0, res.final_accuracy};
      out.records = res.records;
      return out;
    }
  }
  fail(ErrorKind::Config, "unhandled experiment kind");
}

// ----------------------------------------------------------- cell markers --

fs::path marker_path(const fs::path& out_dir, const std::string& hash) {
  return out_dir / "cells" / (hash + ".json");
}

bool load_marker(const fs::path& path, std::vector<double>& values) {
  std::ifstream in(path);
  if (!in) return false;
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception&) {
    return false;  // corrupt marker: recompute the cell
  }
  values = j.at("values").get<std::vector<double>>();
  return true;
}

void store_marker(const fs::path& path, const std::string& cell, std::uint64_t seed,
                  const std::vector<double>& values) {
  json j{{"schema_version", io::kTableSchemaVersion},
         {"cell", cell},
         {"seed", seed},
         {"values", values}};
  io::atomic_write(path, j.dump(2) + "\n");
}

}  // namespace

nn::Model obtain_teacher(const io::RunConfig& cfg, const fs::path& cache_root,
                         std::ostream* progress) {
  if (!cfg.teacher_checkpoint.empty()) return io::load_model(cfg.teacher_checkpoint);

  const std::string hash = io::config_hash(teacher_identity(cfg));
  const fs::path ckpt = cache_root / "checkpoints" / ("teacher-" + hash + ".bin");
  if (fs::exists(ckpt)) return io::load_model(ckpt);

  const data::Dataset train = data::load(teacher_train_spec(cfg));
  const data::Dataset eval = data::load(eval_spec(cfg));
  Rng root(cfg.teacher_schedule.seed);
  Rng init = root.derive("teacher-init");
  nn::Model teacher(cfg.teacher, train.num_classes, cfg.head_bias, init);
  trainer::train_ce(teacher, train, eval, cfg.teacher_schedule, cfg.dataset.augmentation,
                    progress);
  io::save_model(ckpt, teacher);
  return teacher;
}

// ------------------------------------------------------------- the driver --

io::ResultTable run_plan(const ExperimentPlan& plan, const std::string& out_dir,
                         std::ostream* progress) {
  plan.base.validate();
  if (plan.seeds.empty()) fail(ErrorKind::Config, "experiment plan has no seeds");

  io::ResultTable table;
  table.schema_id = plan.schema_id();
  table.columns = plan_columns(plan.kind);

  // The plan invariant up front: every cell must resolve before anything runs.
  std::vector<std::vector<io::RunConfig>> resolved(plan.grid.size());
  for (std::size_t c = 0; c < plan.grid.size(); ++c)
    for (const std::uint64_t seed : plan.seeds)
      resolved[c].push_back(resolve_cell(plan, plan.grid[c], seed));

  const fs::path root(out_dir);
  for (std::size_t c = 0; c < plan.grid.size(); ++c) {
    const GridCell& cell = plan.grid[c];
    for (std::size_t s = 0; s < plan.seeds.size(); ++s) {
      const io::RunConfig& cfg = resolved[c][s];
      const std::uint64_t seed = plan.seeds[s];
      const std::string hash = io::config_hash(cfg);

      io::ResultRow row;
      row.cell = cell.label;
      row.config_hash = hash;
      row.seed = std::to_string(seed);

      std::vector<double> cached;
      if (load_marker(marker_path(root, hash), cached)) {
        row.row_kind = "run";
        row.values = std::move(cached);
        table.rows.push_back(std::move(row));
        continue;
      }

      if (progress)
        (*progress) << "[" << table.schema_id << "] cell '" << cell.label << "' seed " << seed
                    << "\n";

      const fs::path dir = io::run_dir((root / "runs").string(), hash);
      io::RunManifest manifest;
      manifest.config_hash = hash;
      manifest.config_snapshot = io::to_json(cfg);
      manifest.seeds = {seed};
      manifest.started_at = io::now_iso8601();
      io::write_manifest(dir, manifest);

      try {
        CellOutcome outcome = run_cell(plan.kind, cfg, root, progress);
        io::write_metrics_csv(dir / "metrics.csv", hash, outcome.records);
        manifest.finished_at = io::now_iso8601();
        manifest.status = "complete";
        manifest.artifacts = {"metrics.csv"};
        io::write_manifest(dir, manifest);
        store_marker(marker_path(root, hash), cell.label, seed, outcome.values);
        row.row_kind = "run";
        row.values = std::move(outcome.values);
      } catch (const Error& e) {
        manifest.finished_at = io::now_iso8601();
        manifest.status = "failed";
        io::write_manifest(dir, manifest);
        row.row_kind = "failed";
        row.values.assign(table.columns.size(), std::numeric_limits<double>::quiet_NaN());
        row.note = e.what();
      }
      table.rows.push_back(std::move(row));
    }
  }

  const auto aggregates = recompute_aggregates(table);
  table.rows.insert(table.rows.end(), aggregates.begin(), aggregates.end());
  io::write_result_csv(root / (std::string(to_string(plan.kind)) + ".csv"), table);
  return table;
}

bool any_failed(const io::ResultTable& table) {
  for (const auto& r : table.rows)
    if (r.row_kind == "failed") return true;
  return false;
}

std::vector<io::ResultRow> recompute_aggregates(const io::ResultTable& table) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const io::ResultRow*>> groups;
  for (const auto& r : table.rows) {
    if (r.row_kind != "run") continue;
    if (!groups.count(r.cell)) order.push_back(r.cell);
    groups[r.cell].push_back(&r);
  }

  std::vector<io::ResultRow> out;
  for (const auto& cell : order) {
    const auto& rows = groups[cell];
    const std::size_t cols = table.columns.size();
    std::vector<double> mean(cols, 0.0), sd(cols, 0.0);
    for (const auto* r : rows)
      for (std::size_t i = 0; i < cols; ++i) mean[i] += r->values[i];
    for (std::size_t i = 0; i < cols; ++i) mean[i] /= static_cast<double>(rows.size());
    if (rows.size() > 1) {
      for (const auto* r : rows)
        for (std::size_t i = 0; i < cols; ++i) {
          const double d = r->values[i] - mean[i];
          sd[i] += d * d;
        }
      for (std::size_t i = 0; i < cols; ++i)
        sd[i] = std::sqrt(sd[i] / static_cast<double>(rows.size() - 1));
    }
    io::ResultRow m{cell, "-", "-", "mean", std::move(mean), ""};
    io::ResultRow s{cell, "-", "-", "std", std::move(sd), ""};
    out.push_back(std::move(m));
    out.push_back(std::move(s));
  }
  return out;
}

io::ResultTable efficiency_report(const io::RunConfig& base,
                                  const std::vector<std::string>& methods,
                                  std::ostream* progress) {
  ExperimentPlan plan;
  plan.kind = PlanKind::efficiency_report;
  plan.base = base;
  plan.seeds = {base.schedule.seed};
  for (const auto& m : methods) plan.grid.push_back({m, json{{"method", m}}});

  // Timing runs are not resumable — a stale wall clock is not a measurement.
  // Execute cells directly instead of going through the marker store.
  io::ResultTable table;
  table.schema_id = plan.schema_id();
  table.columns = plan_columns(plan.kind);
  const fs::path scratch = fs::temp_directory_path() / "catkd-efficiency";
  for (const auto& cell : plan.grid) {
    const io::RunConfig cfg = resolve_cell(plan, cell, base.schedule.seed);
    io::ResultRow row;
    row.cell = cell.label;
    row.config_hash = io::config_hash(cfg);
    row.seed = std::to_string(base.schedule.seed);
    try {
      CellOutcome outcome = run_cell(plan.kind, cfg, scratch, progress);
      row.row_kind = "run";
      row.values = std::move(outcome.values);
    } catch (const Error& e) {
      row.row_kind = "failed";
      row.values.assign(table.columns.size(), std::numeric_limits<double>::quiet_NaN());
      row.note = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ExperimentPlan default_plan(PlanKind kind, io::RunConfig base) {
  ExperimentPlan plan;
  plan.kind = kind;

  switch (kind) {
    case PlanKind::producer_strength:
      base.method = "cat";
      for (int e : {1, 4, 15})
        plan.grid.push_back({"teacher-epochs=" + std::to_string(e),
                             json{{"teacher_schedule", {{"epochs", e}}}}});
      break;
    case PlanKind::pool_size_sweep:
      base.method = "cat";
      for (int p : {8, 4, 2, 1})
        plan.grid.push_back(
            {"pool=" + std::to_string(p) + "x" + std::to_string(p),
             json{{"distill", {{"transform", {{"pool_w", p}, {"pool_h", p}}}}}}});
      break;
    case PlanKind::binarize_transfer:
      base.method = "cat";
      plan.grid.push_back(
          {"binarize=off", json{{"distill", {{"transform", {{"binarize", false}}}}}}});
      plan.grid.push_back(
          {"binarize=on", json{{"distill", {{"transform", {{"binarize", true}}}}}}});
      break;
    case PlanKind::category_subset:
      base.method = "cat";
      plan.grid.push_back(
          {"categories=all", json{{"distill", {{"transform", {{"subset", nullptr}}}}}}});
      plan.grid.push_back({"categories=top-3",
                           json{{"distill",
                                 {{"transform",
                                   {{"subset", {{"kind", "top-n"}, {"n", 3}}}}}}}}});
      plan.grid.push_back({"categories=bottom-3",
                           json{{"distill",
                                 {{"transform",
                                   {{"subset", {{"kind", "bottom-n"}, {"n", 3}}}}}}}}});
      plan.grid.push_back({"categories=top-1",
                           json{{"distill",
                                 {{"transform",
                                   {{"subset", {{"kind", "top-n"}, {"n", 1}}}}}}}}});
      break;
    case PlanKind::reduced_class:
      base.method = "cat";
      for (int n : {4, 6, 8})
        plan.grid.push_back({"classes=" + std::to_string(n),
                             json{{"dataset", {{"subset", {{"kind", "first-n"}, {"n", n}}}}}}});
      break;
    case PlanKind::beta_sweep:
      base.method = "catkd";
      for (double b : {0.0, 10.0, 100.0, 600.0}) {
        std::string label = "beta=" + std::to_string(static_cast<int>(b));
        plan.grid.push_back({std::move(label), json{{"distill", {{"beta", b}}}}});
      }
      break;
    case PlanKind::normalization_ablation:
      base.method = "catkd";
      plan.grid.push_back(
          {"normalize=always", json{{"distill", {{"normalize_rule", "always"}}}}});
      plan.grid.push_back(
          {"normalize=never", json{{"distill", {{"normalize_rule", "never"}}}}});
      break;
    case PlanKind::data_ratio:
      base.method = "catkd";
      for (double r : {0.2, 0.5, 1.0}) {
        char label[32];
        std::snprintf(label, sizeof(label), "ratio=%.1f", r);
        plan.grid.push_back({label, json{{"dataset", {{"ratio", r}}}}});
      }
      break;
    case PlanKind::transferability:
      base.dataset = data::reduce_classes(base.dataset, 6);
      for (const char* m : {"ce", "cat", "catkd"})
        plan.grid.push_back({std::string("method=") + m, json{{"method", m}}});
      break;
    case PlanKind::efficiency_report:
      for (const char* m : {"ce", "kd-baseline", "catkd"})
        plan.grid.push_back({std::string("method=") + m, json{{"method", m}}});
      break;
  }
  plan.base = std::move(base);
  return plan;
}

}  // namespace catkd::experiments
