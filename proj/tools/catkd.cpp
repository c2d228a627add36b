// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface of the toolkit. Every training subcommand reads one
// JSON config (CATKD_* environment variables override scalar keys), writes
// its artifacts under runs/<config-hash>/, and leaves a manifest behind.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "catkd/error.hpp"
#include "catkd/experiments/experiments.hpp"
#include "catkd/io/config.hpp"
#include "catkd/io/persist.hpp"
#include "catkd/io/plots.hpp"
#include "catkd/nn/model.hpp"
#include "catkd/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace catkd;

namespace {

io::RunConfig load_config(const std::string& path) {
  io::RunConfig cfg = io::parse_config_file(path);
  io::apply_env_overrides(cfg);
  return cfg;
}

// ------------------------------------------------------ verify-conversion --

int cmd_verify_conversion(int batch) {
  double worst32 = 0.0, worst64 = 0.0;
  Rng rng(2026);
  for (const nn::BackboneSpec& spec : nn::backbone_zoo()) {
    for (const bool bias : {true, false}) {
      nn::Model model(spec, 10, bias, rng);
      Tensor x(batch, spec.in_channels, spec.in_h, spec.in_w);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal(0.0, 1.0));

      const Tensor f = model.forward_features(x, /*train=*/false);
      const Mat dense = model.logits_dense_path(f);
      const cam::CamStack cams = model.cams(f);
      const Mat conv = model.logits_converted_path(cams);
      for (int r = 0; r < dense.rows; ++r)
        for (int c = 0; c < dense.cols; ++c)
          worst32 = std::max(worst32, std::abs(static_cast<double>(dense(r, c) - conv(r, c))));

      const TensorD f64 = f.cast<double>();
      const nn::HeadParamsD h64 = model.head().cast<double>();
      const MatD dense64 = nn::logits_dense(f64, h64);
      const cam::CamStackD cams64 = cam::compute_cams(f64, cam::convert_head(h64), spec.id());
      const MatD conv64 = cam::logits_from_cams(cams64, h64.bias);
      for (int r = 0; r < dense64.rows; ++r)
        for (int c = 0; c < dense64.cols; ++c)
          worst64 = std::max(worst64, std::abs(dense64(r, c) - conv64(r, c)));
    }
  }
  std::printf("max |dense - converted|: %.3e float32 (tolerance 1e-5), %.3e float64 (1e-10)\n",
              worst32, worst64);
  return (worst32 <= 1e-5 && worst64 <= 1e-10) ? 0 : 1;
}

// -------------------------------------------------------- training runs ---

struct RunScope {
  fs::path dir;
  io::RunManifest manifest;

  RunScope(const io::RunConfig& cfg, std::vector<std::uint64_t> seeds) {
    const std::string hash = io::config_hash(cfg);
    dir = io::run_dir(cfg.run_root, hash);
    manifest.config_hash = hash;
    manifest.config_snapshot = io::to_json(cfg);
    manifest.seeds = std::move(seeds);
    manifest.started_at = io::now_iso8601();
    io::write_manifest(dir, manifest);
  }

  void finish(bool ok, std::vector<std::string> artifacts) {
    manifest.finished_at = io::now_iso8601();
    manifest.status = ok ? "complete" : "failed";
    manifest.artifacts = std::move(artifacts);
    io::write_manifest(dir, manifest);
  }
};

int cmd_train_teacher(const io::RunConfig& cfg) {
  RunScope scope(cfg, {cfg.teacher_schedule.seed});
  const data::Dataset train = data::load(experiments::train_spec(cfg));
  const data::Dataset eval = data::load(experiments::eval_spec(cfg));
  Rng root(cfg.teacher_schedule.seed);
  Rng init = root.derive("teacher-init");
  nn::Model teacher(cfg.teacher, train.num_classes, cfg.head_bias, init);
  const trainer::TrainResult res = trainer::train_ce(
      teacher, train, eval, cfg.teacher_schedule, cfg.dataset.augmentation, &std::cout);
  io::save_model(scope.dir / "teacher.bin", teacher);
  io::write_metrics_csv(scope.dir / "metrics.csv", scope.manifest.config_hash, res.records);
  scope.finish(!res.diverged, {"teacher.bin", "metrics.csv"});
  std::printf("teacher %s: accuracy %.4f  (%s)\n", cfg.teacher.id().c_str(),
              res.final_accuracy, scope.dir.string().c_str());
  if (res.diverged) std::fprintf(stderr, "training diverged: %s\n", res.diagnostic.c_str());
  return res.diverged ? 1 : 0;
}

int run_student(const io::RunConfig& cfg, const std::string& forced_method) {
  io::RunConfig run = cfg;
  if (!forced_method.empty()) run.method = forced_method;
  run.validate();

  RunScope scope(run, {run.schedule.seed});
  const data::Dataset train = data::load(experiments::train_spec(run));
  const data::Dataset eval = data::load(experiments::eval_spec(run));
  nn::Model teacher = experiments::obtain_teacher(run, run.run_root, &std::cout);
  Rng root(run.schedule.seed);
  Rng init = root.derive("student-init");
  nn::Model student(run.student, train.num_classes, run.head_bias, init);
  const trainer::DistillPair pair{&teacher, &student, run.distill};

  trainer::TrainResult res;
  if (run.method == "cat")
    res = trainer::train_cat(pair, data::LabelFreeView(train), eval, run.schedule, &std::cout);
  else if (run.method == "catkd")
    res = trainer::train_catkd(pair, train, eval, run.schedule, run.dataset.augmentation,
                               &std::cout);
  else if (run.method == "kd-baseline")
    res = trainer::train_kd_baseline(pair, train, eval, run.schedule,
                                     run.dataset.augmentation, &std::cout);
  else
    fail(ErrorKind::Config,
         "method '" + run.method + "' is not a distillation method (use cat | catkd | kd-baseline)");

  io::save_model(scope.dir / "student.bin", student);
  io::write_metrics_csv(scope.dir / "metrics.csv", scope.manifest.config_hash, res.records);
  scope.finish(!res.diverged, {"student.bin", "metrics.csv"});
  std::printf("%s student %s: accuracy %.4f  (%s)\n", run.method.c_str(),
              run.student.id().c_str(), res.final_accuracy, scope.dir.string().c_str());
  if (res.diverged) std::fprintf(stderr, "training diverged: %s\n", res.diagnostic.c_str());
  return res.diverged ? 1 : 0;
}

int cmd_probe(const io::RunConfig& cfg, const std::string& checkpoint) {
  nn::Model model = io::load_model(checkpoint);
  const data::Dataset train = data::load(experiments::train_spec(cfg));
  const data::Dataset eval = data::load(experiments::eval_spec(cfg));
  const double acc = trainer::linear_probe(model, train, eval, cfg.schedule, &std::cout);
  std::printf("linear probe on %s features: accuracy %.4f\n", model.producer().c_str(), acc);
  return 0;
}

// ------------------------------------------------------------- ablations --

void print_table(const io::ResultTable& table) {
  std::printf("%-24s %-6s %-8s", "cell", "seed", "kind");
  for (const auto& c : table.columns) std::printf(" %18s", c.c_str());
  std::printf("\n");
  for (const auto& r : table.rows) {
    std::printf("%-24s %-6s %-8s", r.cell.c_str(), r.seed.c_str(), r.row_kind.c_str());
    for (double v : r.values) std::printf(" %18.6f", v);
    if (!r.note.empty()) std::printf("  %s", r.note.c_str());
    std::printf("\n");
  }
}

int cmd_ablate(const io::RunConfig& cfg, const std::string& kind_name, std::string out_dir) {
  const experiments::PlanKind kind = experiments::plan_kind_from(kind_name);
  const experiments::ExperimentPlan plan = experiments::default_plan(kind, cfg);
  if (out_dir.empty()) out_dir = (fs::path(cfg.run_root) / "ablations" / kind_name).string();
  const io::ResultTable table = experiments::run_plan(plan, out_dir, &std::cout);
  print_table(table);
  io::emit_plot(table, out_dir);
  std::printf("table + figure under %s\n", out_dir.c_str());
  if (experiments::any_failed(table)) {
    std::fprintf(stderr, "one or more cells failed (see the failed rows above)\n");
    return 1;
  }
  return 0;
}

// ----------------------------------------------------------------- plots --

Tensor load_image_tensor(const std::string& path, const nn::BackboneSpec& spec) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) fail(ErrorKind::Io, "cannot read image '" + path + "'");
  cv::Mat resized;
  cv::resize(img, resized, cv::Size(spec.in_w, spec.in_h), 0, 0, cv::INTER_AREA);
  cv::Mat rgb;
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(rgb, CV_32FC3, 1.0 / 255.0);

  // Standardize per channel on the image's own statistics — visualization
  // only needs the maps' spatial structure, not the training distribution.
  Tensor t(1, 3, spec.in_h, spec.in_w);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int y = 0; y < spec.in_h; ++y)
      for (int x = 0; x < spec.in_w; ++x) mean += rgb.at<cv::Vec3f>(y, x)[c];
    mean /= spec.in_h * spec.in_w;
    for (int y = 0; y < spec.in_h; ++y)
      for (int x = 0; x < spec.in_w; ++x) {
        const double d = rgb.at<cv::Vec3f>(y, x)[c] - mean;
        var += d * d;
      }
    const double sd = std::sqrt(var / (spec.in_h * spec.in_w));
    float* plane = t.plane(0, c);
    for (int y = 0; y < spec.in_h; ++y)
      for (int x = 0; x < spec.in_w; ++x)
        plane[y * spec.in_w + x] =
            static_cast<float>((rgb.at<cv::Vec3f>(y, x)[c] - mean) / std::max(sd, 1e-6));
  }
  return t;
}

int cmd_plot_cams(const std::string& checkpoint, const std::string& image,
                  const std::string& out_dir, int top_k) {
  nn::Model model = io::load_model(checkpoint);
  const Tensor x = load_image_tensor(image, model.spec());
  const fs::path out = fs::path(out_dir) / "cams.png";
  const io::CamPlotInfo info = io::plot_cams(model, x, out, top_k);
  std::printf("wrote %s; top categories:", out.string().c_str());
  for (std::size_t i = 0; i < info.categories.size(); ++i)
    std::printf(" %d (p=%.3f)", info.categories[i], info.scores[i]);
  std::printf("\n");
  return 0;
}

int cmd_plot_table(const std::string& csv, const std::string& out_dir) {
  const io::ResultTable table = io::read_result_csv(csv);
  const fs::path out = io::emit_plot(table, out_dir);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- report --

int cmd_report(const std::string& dir) {
  bool found = false;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.filename() == "manifest.json") {
      const io::RunManifest m = io::read_manifest(p.parent_path());
      std::printf("run %s  status=%s  started=%s  artifacts=%zu\n", m.config_hash.c_str(),
                  m.status.c_str(), m.started_at.c_str(), m.artifacts.size());
      found = true;
    } else if (p.extension() == ".csv" && p.filename() != "metrics.csv") {
      try {
        const io::ResultTable t = io::read_result_csv(p);
        std::printf("\n%s (%s)\n", p.string().c_str(), t.schema_id.c_str());
        print_table(t);
        found = true;
      } catch (const Error&) {
        // not a result table; skip
      }
    }
  }
  if (!found) std::printf("no runs or tables under '%s'\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-attention-transfer distillation toolkit"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify-conversion",
                                    "check dense vs converted-head logit agreement on the "
                                    "whole backbone zoo");
  int verify_batch = 8;
  verify->add_option("--batch", verify_batch, "random inputs per backbone/bias case");

  std::string config_path, out_dir, checkpoint, image, table_csv, ablate_kind,
      report_dir = "runs";
  int top_k = 4;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config")->required();
  };

  auto* teacher = app.add_subcommand("train-teacher", "pretrain a producer with cross-entropy");
  add_config(teacher);
  auto* cat = app.add_subcommand("cat", "pure attention transfer (no labels, no logits)");
  add_config(cat);
  auto* distill = app.add_subcommand("distill",
                                     "composite distillation (method from config: catkd or "
                                     "kd-baseline)");
  add_config(distill);
  auto* probe = app.add_subcommand("probe", "linear-probe a checkpoint's frozen features");
  add_config(probe);
  probe->add_option("--checkpoint", checkpoint, "model checkpoint to probe")->required();

  auto* ablate = app.add_subcommand("ablate", "run an experiment grid");
  ablate->add_option("kind", ablate_kind,
                     "producer-strength | pool-size-sweep | binarize-transfer | "
                     "category-subset | reduced-class | beta-sweep | "
                     "normalization-ablation | data-ratio | transferability | "
                     "efficiency-report")
      ->required();
  add_config(ablate);
  ablate->add_option("--out", out_dir, "output directory (default <run_root>/ablations/<kind>)");

  auto* plot = app.add_subcommand("plot", "render CAM grids or result-table figures");
  plot->add_option("--cams", checkpoint, "model checkpoint for a CAM heatmap grid");
  plot->add_option("--image", image, "input image for --cams");
  plot->add_option("--table", table_csv, "result-table CSV to chart");
  plot->add_option("--out", out_dir, "output directory")->default_val("plots");
  plot->add_option("--top", top_k, "categories per CAM grid")->default_val(4);

  auto* report = app.add_subcommand("report", "summarize manifests and result tables");
  report->add_option("--dir", report_dir, "directory to scan");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify_conversion(verify_batch);
    if (teacher->parsed()) return cmd_train_teacher(load_config(config_path));
    if (cat->parsed()) return run_student(load_config(config_path), "cat");
    if (distill->parsed()) return run_student(load_config(config_path), "");
    if (probe->parsed()) return cmd_probe(load_config(config_path), checkpoint);
    if (ablate->parsed()) return cmd_ablate(load_config(config_path), ablate_kind, out_dir);
    if (plot->parsed()) {
      if (!checkpoint.empty() && !image.empty()) return cmd_plot_cams(checkpoint, image, out_dir, top_k);
      if (!table_csv.empty()) return cmd_plot_table(table_csv, out_dir);
      std::fprintf(stderr, "plot: need --cams with --image, or --table\n");
      return 1;
    }
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
