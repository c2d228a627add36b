// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "catkd/data/dataset.hpp"
#include "catkd/losses/losses.hpp"
#include "catkd/nn/model.hpp"

namespace catkd::trainer {

// Momentum-SGD schedule with step decay. All loops in this module are
// single-threaded and seed-deterministic: identical (config, seed) pairs
// produce identical metric streams.
struct TrainSchedule {
  int epochs = 10;
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr = 0.05;
  std::vector<int> milestones;  // epochs at which lr multiplies by decay_factor
  double decay_factor = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  double lr_at(int epoch) const;
};

struct MetricRecord {
  int epoch = 0;
  std::string split;  // "train" or "eval"
  double ce = 0.0;
  double cat = 0.0;
  double kd = 0.0;
  double total = 0.0;
  double accuracy = 0.0;  // eval rows only
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<MetricRecord> records;
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

// Momentum SGD over named parameter references. Weight decay is added to the
// gradient before the momentum update (the convention of the standard CIFAR
// recipes): g += wd*w; v = mu*v + g; w -= lr*v.
class Sgd {
 public:
  Sgd(std::vector<nn::ParamRef> params, double momentum, double weight_decay);
  void step(double lr);

 private:
  std::vector<nn::ParamRef> params_;
  std::vector<std::vector<float>> velocity_;
  double mu_, wd_;
};

// Teacher plus student with the distillation settings that tie them together.
// The teacher is only ever run in eval mode; its parameters are never handed
// to an optimizer.
struct DistillPair {
  nn::Model* teacher = nullptr;
  nn::Model* student = nullptr;
  losses::DistillConfig distill;
};

/// Top-1 accuracy of the dense-head path.
double evaluate(nn::Model& model, const data::Dataset& eval, int batch_size = 256);

/// Top-1 accuracy via the converted head: logits recovered by spatially
/// averaging the model's own CAMs.
double evaluate_converted(nn::Model& model, const data::Dataset& eval, int batch_size = 256);

/// Plain cross-entropy training (teacher pretraining and the CE baseline).
TrainResult train_ce(nn::Model& model, const data::Dataset& train, const data::Dataset& eval,
                     const TrainSchedule& sched,
                     data::Augmentation aug = data::Augmentation::none,
                     std::ostream* progress = nullptr);

/// Pure attention transfer: the student trains by matching the teacher's
/// pooled, normalized CAMs and never sees a label or a logit — enforced by
/// the label-free view type. Normalization must resolve to a concrete order
/// (turning it off would leak prediction magnitudes); otherwise config error.
TrainResult train_cat(const DistillPair& pair, const data::LabelFreeView& train,
                      const data::Dataset& eval, const TrainSchedule& sched,
                      std::ostream* progress = nullptr);

/// Cross entropy plus beta-weighted CAM matching.
TrainResult train_catkd(const DistillPair& pair, const data::Dataset& train,
                        const data::Dataset& eval, const TrainSchedule& sched,
                        data::Augmentation aug = data::Augmentation::none,
                        std::ostream* progress = nullptr);

/// Logit-distillation baseline: CE plus temperature-softened KL to the
/// teacher's logits.
TrainResult train_kd_baseline(const DistillPair& pair, const data::Dataset& train,
                              const data::Dataset& eval, const TrainSchedule& sched,
                              data::Augmentation aug = data::Augmentation::none,
                              std::ostream* progress = nullptr);

/// Trains a fresh dense head on frozen features and returns its accuracy on
/// `eval`. Features are extracted once (eval mode, no augmentation); only the
/// new head's parameters move.
double linear_probe(nn::Model& extractor, const data::Dataset& train,
                    const data::Dataset& eval, const TrainSchedule& sched,
                    std::ostream* progress = nullptr);

/// Seed-deterministic epoch permutation shared by all loops.
std::vector<int> shuffled_indices(int n, std::uint64_t seed, int epoch);

}  // namespace catkd::trainer
