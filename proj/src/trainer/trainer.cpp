// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "catkd/cam/transforms.hpp"
#include "catkd/error.hpp"

namespace catkd::trainer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor gather_images(const Tensor& images, const std::vector<int>& idx, int from, int to) {
  Tensor out(to - from, images.c(), images.h(), images.w());
  const std::size_t sample = images.sample_size();
  for (int i = from; i < to; ++i) {
    const float* src = images.data() + static_cast<std::size_t>(idx[i]) * sample;
    std::copy(src, src + sample, out.data() + static_cast<std::size_t>(i - from) * sample);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx,
                               int from, int to) {
  std::vector<int> out;
  out.reserve(to - from);
  for (int i = from; i < to; ++i) out.push_back(labels[idx[i]]);
  return out;
}

std::vector<int> identity_indices(int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

bool note_divergence(TrainResult& r, double loss, int epoch) {
  if (std::isfinite(loss)) return false;
  r.diverged = true;
  r.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch);
  return true;
}

void log_epoch(std::ostream* progress, const MetricRecord& train, const MetricRecord& eval) {
  if (!progress) return;
  *progress << "epoch " << train.epoch << "  loss " << train.total << "  acc " << eval.accuracy
            << "  (" << train.seconds + eval.seconds << "s)\n";
}

// Pre-extracted teacher artifacts for one fixed set of images. Only valid
// while the image set itself is fixed (no stochastic augmentation).
struct TeacherCams {
  Tensor pooled;  // n x K x ph x pw, raw (un-normalized) pooled maps
  bool binarized = false;
  std::vector<std::vector<int>> subsets;  // per-sample category subsets, if any
  std::string producer;

  cam::CamStack stack_for(const std::vector<int>& idx, int from, int to) const {
    cam::CamStack s;
    s.maps = gather_images(pooled, idx, from, to);
    s.pooled = {{pooled.w(), pooled.h()}};
    s.binarized = binarized;
    s.producer = producer;
    return s;
  }

  std::vector<std::vector<int>> subsets_for(const std::vector<int>& idx, int from,
                                            int to) const {
    std::vector<std::vector<int>> out;
    out.reserve(to - from);
    for (int i = from; i < to; ++i) out.push_back(subsets[idx[i]]);
    return out;
  }
};

// One teacher pass over a batch: pooled (optionally binarized) CAMs plus the
// per-sample category subsets when a subset policy is configured.
void teacher_batch(nn::Model& teacher, const Tensor& images,
                   const cam::TransformConfig& tc, cam::CamStack& out_stack,
                   std::vector<std::vector<int>>* out_subsets) {
  const Tensor feat = teacher.forward_features(images, /*train=*/false);
  const cam::CamStack raw = teacher.cams(feat);
  out_stack = cam::pool_cams(raw, tc.pool_w, tc.pool_h);
  if (tc.binarize) out_stack = cam::binarize_cams(out_stack);
  if (tc.subset && out_subsets) {
    const Mat logits = teacher.logits_converted_path(raw);
    for (int i = 0; i < logits.rows; ++i) {
      std::vector<float> row(logits.row(i), logits.row(i) + logits.cols);
      out_subsets->push_back(cam::select_categories(row, *tc.subset));
    }
  }
}

TeacherCams cache_teacher(nn::Model& teacher, const Tensor& images,
                          const cam::TransformConfig& tc, int batch_size) {
  const int n = images.n();
  TeacherCams cache;
  cache.pooled = Tensor(n, teacher.num_categories(), tc.pool_h, tc.pool_w);
  cache.binarized = tc.binarize;
  cache.producer = teacher.producer();
  const auto idx = identity_indices(n);
  for (int from = 0; from < n; from += batch_size) {
    const int to = std::min(n, from + batch_size);
    cam::CamStack stack;
    std::vector<std::vector<int>> subsets;
    teacher_batch(teacher, gather_images(images, idx, from, to), tc, stack,
                  tc.subset ? &subsets : nullptr);
    std::copy(stack.maps.data(), stack.maps.data() + stack.maps.size(),
              cache.pooled.data() + static_cast<std::size_t>(from) * cache.pooled.sample_size());
    for (auto& s : subsets) cache.subsets.push_back(std::move(s));
  }
  return cache;
}

double accuracy_of(const Mat& logits, const std::vector<int>& labels) {
  const auto pred = nn::argmax_rows(logits);
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
}

template <typename LogitsFn>
double evaluate_with(nn::Model& model, const data::Dataset& eval, int batch_size,
                     LogitsFn logits_of) {
  const int n = eval.size();
  if (n == 0) return 0.0;
  const auto idx = identity_indices(n);
  double correct = 0.0;
  for (int from = 0; from < n; from += batch_size) {
    const int to = std::min(n, from + batch_size);
    const Tensor x = gather_images(eval.images, idx, from, to);
    const Tensor f = model.forward_features(x, /*train=*/false);
    const Mat logits = logits_of(f);
    correct += accuracy_of(logits, gather_labels(eval.labels, idx, from, to)) * (to - from);
  }
  return correct / n;
}

}  // namespace

void TrainSchedule::validate() const {
  if (epochs < 0) fail(ErrorKind::Config, "schedule: epochs must be nonnegative");
  if (batch_size < 1) fail(ErrorKind::Config, "schedule: batch size must be positive");
  if (lr < 0.0) fail(ErrorKind::Config, "schedule: learning rate must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) fail(ErrorKind::Config, "schedule: momentum in [0,1)");
  if (weight_decay < 0.0) fail(ErrorKind::Config, "schedule: weight decay must be nonnegative");
  if (!(decay_factor > 0.0)) fail(ErrorKind::Config, "schedule: decay factor must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= epochs)
      fail(ErrorKind::Config, "schedule: milestone beyond the last epoch");
    if (i > 0 && milestones[i] <= milestones[i - 1])
      fail(ErrorKind::Config, "schedule: milestones must be strictly increasing");
  }
}

double TrainSchedule::lr_at(int epoch) const {
  double value = lr;
  for (int m : milestones)
    if (epoch >= m) value *= decay_factor;
  return value;
}

Sgd::Sgd(std::vector<nn::ParamRef> params, double momentum, double weight_decay)
    : params_(std::move(params)), mu_(momentum), wd_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(p.value->size(), 0.f);
}

void Sgd::step(double lr) {
  const float mu = static_cast<float>(mu_);
  const float wd = static_cast<float>(wd_);
  const float rate = static_cast<float>(lr);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& w = *params_[pi].value;
    auto& g = *params_[pi].grad;
    auto& v = velocity_[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float grad = g[i] + wd * w[i];
      v[i] = mu * v[i] + grad;
      w[i] -= rate * v[i];
    }
  }
}

std::vector<int> shuffled_indices(int n, std::uint64_t seed, int epoch) {
  auto idx = identity_indices(n);
  Rng rng = Rng(seed).derive("shuffle").derive(static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

double evaluate(nn::Model& model, const data::Dataset& eval, int batch_size) {
  return evaluate_with(model, eval, batch_size,
                       [&](const Tensor& f) { return model.logits_dense_path(f); });
}

double evaluate_converted(nn::Model& model, const data::Dataset& eval, int batch_size) {
  return evaluate_with(model, eval, batch_size,
                       [&](const Tensor& f) { return model.logits_converted_path(model.cams(f)); });
}

TrainResult train_ce(nn::Model& model, const data::Dataset& train, const data::Dataset& eval,
                     const TrainSchedule& sched, data::Augmentation aug,
                     std::ostream* progress) {
  sched.validate();
  TrainResult result;
  Sgd opt(model.params(), sched.momentum, sched.weight_decay);
  const int n = train.size();

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto idx = shuffled_indices(n, sched.seed, epoch);
    Rng aug_rng = Rng(sched.seed).derive("augment").derive(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;

    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      Tensor x = gather_images(train.images, idx, from, to);
      if (aug == data::Augmentation::standard_crop_flip) x = data::augment_crop_flip(x, aug_rng);
      const auto labels = gather_labels(train.labels, idx, from, to);

      model.zero_grad();
      const Tensor f = model.forward_features(x, /*train=*/true);
      Mat grad;
      const float loss = losses::ce_loss(model.logits_dense_path(f), labels, &grad);
      if (note_divergence(result, loss, epoch)) return result;
      model.backward_dense(f, grad);
      opt.step(sched.lr_at(epoch));
      loss_sum += static_cast<double>(loss) * (to - from);
    }

    MetricRecord tr{epoch, "train"};
    tr.ce = tr.total = n ? loss_sum / n : 0.0;
    tr.seconds = seconds_since(t0);

    const auto te = Clock::now();
    MetricRecord ev{epoch, "eval"};
    ev.accuracy = evaluate(model, eval);
    ev.seconds = seconds_since(te);

    result.records.push_back(tr);
    result.records.push_back(ev);
    result.best_accuracy = std::max(result.best_accuracy, ev.accuracy);
    result.final_accuracy = ev.accuracy;
    log_epoch(progress, tr, ev);
  }
  return result;
}

TrainResult train_cat(const DistillPair& pair, const data::LabelFreeView& train,
                      const data::Dataset& eval, const TrainSchedule& sched,
                      std::ostream* progress) {
  sched.validate();
  pair.distill.validate();
  nn::Model& teacher = *pair.teacher;
  nn::Model& student = *pair.student;
  const bool same_arch = teacher.spec().same_architecture(student.spec());
  const cam::NormOrder order = pair.distill.resolved_norm(same_arch);
  if (order == cam::NormOrder::none)
    fail(ErrorKind::Config,
         "pure attention transfer requires map normalization; the resolved order is 'none'");
  if (teacher.num_categories() != student.num_categories())
    fail(ErrorKind::IncompatibleStacks, "teacher and student category counts differ");

  const cam::TransformConfig& tc = pair.distill.transform;
  TrainResult result;
  Sgd opt(student.params(), sched.momentum, sched.weight_decay);
  const int n = train.size();
  const TeacherCams cache = cache_teacher(teacher, train.images(), tc, sched.batch_size);

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto idx = shuffled_indices(n, sched.seed, epoch);
    double loss_sum = 0.0;

    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      const Tensor x = gather_images(train.images(), idx, from, to);

      student.zero_grad();
      const Tensor f = student.forward_features(x, /*train=*/true);
      const cam::CamStack s_pooled = cam::pool_cams(student.cams(f), tc.pool_w, tc.pool_h);
      const cam::CamStack t_stack = cache.stack_for(idx, from, to);
      const auto subsets =
          tc.subset ? cache.subsets_for(idx, from, to) : std::vector<std::vector<int>>{};

      Tensor grad_pooled;
      const float loss = losses::cat_loss(t_stack, s_pooled, order, tc.epsilon,
                                          tc.subset ? &subsets : nullptr, &grad_pooled);
      if (note_divergence(result, loss, epoch)) return result;
      const Tensor grad_raw = cam::pool_cams_backward(grad_pooled, f.h(), f.w());
      student.backward_converted(f, nullptr, &grad_raw);
      opt.step(sched.lr_at(epoch));
      loss_sum += static_cast<double>(loss) * (to - from);
    }

    MetricRecord tr{epoch, "train"};
    tr.cat = tr.total = n ? loss_sum / n : 0.0;
    tr.seconds = seconds_since(t0);

    const auto te = Clock::now();
    MetricRecord ev{epoch, "eval"};
    ev.accuracy = evaluate_converted(student, eval);
    ev.seconds = seconds_since(te);

    result.records.push_back(tr);
    result.records.push_back(ev);
    result.best_accuracy = std::max(result.best_accuracy, ev.accuracy);
    result.final_accuracy = ev.accuracy;
    log_epoch(progress, tr, ev);
  }
  return result;
}

TrainResult train_catkd(const DistillPair& pair, const data::Dataset& train,
                        const data::Dataset& eval, const TrainSchedule& sched,
                        data::Augmentation aug, std::ostream* progress) {
  sched.validate();
  pair.distill.validate();
  // beta = 0 degenerates to plain CE training; taking the identical code path
  // makes the metric streams match exactly, not merely to rounding.
  if (pair.distill.beta == 0.0)
    return train_ce(*pair.student, train, eval, sched, aug, progress);
  nn::Model& teacher = *pair.teacher;
  nn::Model& student = *pair.student;
  const bool same_arch = teacher.spec().same_architecture(student.spec());
  if (teacher.num_categories() != student.num_categories())
    fail(ErrorKind::IncompatibleStacks, "teacher and student category counts differ");

  const cam::TransformConfig& tc = pair.distill.transform;
  TrainResult result;
  Sgd opt(student.params(), sched.momentum, sched.weight_decay);
  const int n = train.size();

  // Teacher CAMs are a pure function of the image, so they are cacheable
  // exactly when the images are fixed across epochs.
  const bool cacheable = aug == data::Augmentation::none;
  TeacherCams cache;
  if (cacheable) cache = cache_teacher(teacher, train.images, tc, sched.batch_size);

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto idx = shuffled_indices(n, sched.seed, epoch);
    Rng aug_rng = Rng(sched.seed).derive("augment").derive(static_cast<std::uint64_t>(epoch));
    double ce_sum = 0.0, cat_sum = 0.0, total_sum = 0.0;

    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      Tensor x = gather_images(train.images, idx, from, to);
      if (aug == data::Augmentation::standard_crop_flip) x = data::augment_crop_flip(x, aug_rng);
      const auto labels = gather_labels(train.labels, idx, from, to);

      cam::CamStack t_stack;
      std::vector<std::vector<int>> subsets;
      if (cacheable) {
        t_stack = cache.stack_for(idx, from, to);
        if (tc.subset) subsets = cache.subsets_for(idx, from, to);
      } else {
        teacher_batch(teacher, x, tc, t_stack, tc.subset ? &subsets : nullptr);
      }

      student.zero_grad();
      const Tensor f = student.forward_features(x, /*train=*/true);
      const cam::CamStack s_raw = student.cams(f);
      const Mat logits = student.logits_converted_path(s_raw);
      const cam::CamStack s_pooled = cam::pool_cams(s_raw, tc.pool_w, tc.pool_h);

      Mat grad_logits;
      Tensor grad_pooled;
      const auto parts =
          losses::catkd_loss(logits, labels, t_stack, s_pooled, pair.distill, same_arch,
                             tc.subset ? &subsets : nullptr, &grad_logits, &grad_pooled);
      if (note_divergence(result, parts.total, epoch)) return result;
      const Tensor grad_raw = cam::pool_cams_backward(grad_pooled, f.h(), f.w());
      student.backward_converted(f, &grad_logits, &grad_raw);
      opt.step(sched.lr_at(epoch));

      ce_sum += static_cast<double>(parts.ce) * (to - from);
      cat_sum += static_cast<double>(parts.cat) * (to - from);
      total_sum += static_cast<double>(parts.total) * (to - from);
    }

    MetricRecord tr{epoch, "train"};
    tr.ce = n ? ce_sum / n : 0.0;
    tr.cat = n ? cat_sum / n : 0.0;
    tr.total = n ? total_sum / n : 0.0;
    tr.seconds = seconds_since(t0);

    const auto te = Clock::now();
    MetricRecord ev{epoch, "eval"};
    ev.accuracy = evaluate_converted(student, eval);
    ev.seconds = seconds_since(te);

    result.records.push_back(tr);
    result.records.push_back(ev);
    result.best_accuracy = std::max(result.best_accuracy, ev.accuracy);
    result.final_accuracy = ev.accuracy;
    log_epoch(progress, tr, ev);
  }
  return result;
}

TrainResult train_kd_baseline(const DistillPair& pair, const data::Dataset& train,
                              const data::Dataset& eval, const TrainSchedule& sched,
                              data::Augmentation aug, std::ostream* progress) {
  sched.validate();
  pair.distill.validate();
  nn::Model& teacher = *pair.teacher;
  nn::Model& student = *pair.student;
  if (teacher.num_categories() != student.num_categories())
    fail(ErrorKind::IncompatibleStacks, "teacher and student category counts differ");

  TrainResult result;
  Sgd opt(student.params(), sched.momentum, sched.weight_decay);
  const int n = train.size();

  // Frozen-teacher logits are a pure function of the image, cacheable exactly
  // when the images are fixed across epochs — the same rule the composite
  // trainer applies to teacher maps, so the efficiency comparison stays fair.
  const bool cacheable = aug == data::Augmentation::none;
  Mat logit_cache;
  if (cacheable) {
    logit_cache = Mat(n, teacher.num_categories());
    const auto ident = identity_indices(n);
    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      const Tensor tf =
          teacher.forward_features(gather_images(train.images, ident, from, to), false);
      const Mat chunk = teacher.logits_dense_path(tf);
      std::copy(chunk.v.begin(), chunk.v.end(), logit_cache.row(from));
    }
  }

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto idx = shuffled_indices(n, sched.seed, epoch);
    Rng aug_rng = Rng(sched.seed).derive("augment").derive(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;

    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      Tensor x = gather_images(train.images, idx, from, to);
      if (aug == data::Augmentation::standard_crop_flip) x = data::augment_crop_flip(x, aug_rng);
      const auto labels = gather_labels(train.labels, idx, from, to);

      Mat t_logits;
      if (cacheable) {
        t_logits = Mat(to - from, teacher.num_categories());
        for (int i = from; i < to; ++i)
          std::copy(logit_cache.row(idx[i]), logit_cache.row(idx[i]) + logit_cache.cols,
                    t_logits.row(i - from));
      } else {
        const Tensor tf = teacher.forward_features(x, /*train=*/false);
        t_logits = teacher.logits_dense_path(tf);
      }

      student.zero_grad();
      const Tensor f = student.forward_features(x, /*train=*/true);
      const Mat s_logits = student.logits_dense_path(f);
      Mat grad;
      const float loss =
          losses::kd_baseline_loss(s_logits, t_logits, labels, pair.distill.temperature,
                                   pair.distill.kd_weight, &grad);
      if (note_divergence(result, loss, epoch)) return result;
      student.backward_dense(f, grad);
      opt.step(sched.lr_at(epoch));
      loss_sum += static_cast<double>(loss) * (to - from);
    }

    MetricRecord tr{epoch, "train"};
    tr.kd = tr.total = n ? loss_sum / n : 0.0;
    tr.seconds = seconds_since(t0);

    const auto te = Clock::now();
    MetricRecord ev{epoch, "eval"};
    ev.accuracy = evaluate(student, eval);
    ev.seconds = seconds_since(te);

    result.records.push_back(tr);
    result.records.push_back(ev);
    result.best_accuracy = std::max(result.best_accuracy, ev.accuracy);
    result.final_accuracy = ev.accuracy;
    log_epoch(progress, tr, ev);
  }
  return result;
}

double linear_probe(nn::Model& extractor, const data::Dataset& train,
                    const data::Dataset& eval, const TrainSchedule& sched,
                    std::ostream* progress) {
  sched.validate();
  int max_label = 0;
  for (int l : train.labels) max_label = std::max(max_label, l);
  for (int l : eval.labels) max_label = std::max(max_label, l);
  const int k = std::max(train.num_classes, max_label + 1);
  if (k < 2) fail(ErrorKind::HeadShape, "linear_probe: need at least 2 classes");

  // Frozen extractor: pooled features are computed once per split.
  auto extract = [&](const data::Dataset& d) {
    const int n = d.size();
    const auto idx = identity_indices(n);
    Mat feats;
    for (int from = 0; from < n; from += 256) {
      const int to = std::min(n, from + 256);
      const Tensor f =
          extractor.forward_features(gather_images(d.images, idx, from, to), /*train=*/false);
      const Mat pooled = nn::gap(f);
      if (feats.rows == 0) feats = Mat(n, pooled.cols);
      if (pooled.cols != feats.cols)
        fail(ErrorKind::HeadShape, "linear_probe: feature width changed mid-extraction");
      std::copy(pooled.v.begin(), pooled.v.end(), feats.row(from));
    }
    return feats;
  };
  const Mat feats_train = extract(train);
  const Mat feats_eval = extract(eval);
  if (feats_train.cols != feats_eval.cols)
    fail(ErrorKind::HeadShape, "linear_probe: train/eval feature dimensions differ");
  const int c = feats_train.cols;

  Mat w(k, c), gw(k, c);
  std::vector<float> b(k, 0.f), gb(k, 0.f);
  Rng init = Rng(sched.seed).derive("probe-init");
  const float bound = 1.f / std::sqrt(static_cast<float>(c));
  for (auto& v : w.v) v = static_cast<float>(init.uniform(-bound, bound));

  Sgd opt({{"probe.w", &w.v, &gw.v}, {"probe.b", &b, &gb}}, sched.momentum, sched.weight_decay);

  auto logits_of = [&](const Mat& feats, const std::vector<int>& rows) {
    Mat logits(static_cast<int>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const float* f = feats.row(rows[i]);
      for (int j = 0; j < k; ++j) {
        const float* wr = w.row(j);
        float acc = b[j];
        for (int d = 0; d < c; ++d) acc += wr[d] * f[d];
        logits(static_cast<int>(i), j) = acc;
      }
    }
    return logits;
  };

  const int n = train.size();
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto idx = shuffled_indices(n, sched.seed, epoch);
    double loss_sum = 0.0;
    for (int from = 0; from < n; from += sched.batch_size) {
      const int to = std::min(n, from + sched.batch_size);
      std::vector<int> rows(idx.begin() + from, idx.begin() + to);
      const auto labels = gather_labels(train.labels, idx, from, to);
      const Mat logits = logits_of(feats_train, rows);
      Mat grad;
      const float loss = losses::ce_loss(logits, labels, &grad);
      loss_sum += static_cast<double>(loss) * (to - from);

      gw.v.assign(gw.v.size(), 0.f);
      gb.assign(gb.size(), 0.f);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* f = feats_train.row(rows[i]);
        const float* g = grad.row(static_cast<int>(i));
        for (int j = 0; j < k; ++j) {
          float* gwr = gw.row(j);
          for (int d = 0; d < c; ++d) gwr[d] += g[j] * f[d];
          gb[j] += g[j];
        }
      }
      opt.step(sched.lr_at(epoch));
    }
    if (progress) *progress << "probe epoch " << epoch << "  loss " << loss_sum / n << "\n";
  }

  const auto rows_eval = identity_indices(eval.size());
  const Mat logits = logits_of(feats_eval, rows_eval);
  return accuracy_of(logits, eval.labels);
}

}  // namespace catkd::trainer
