// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "catkd/rng.hpp"
#include "catkd/tensor.hpp"

namespace catkd::data {

enum class DatasetName { cifar100, cifar10, stl10, tiny_imagenet, synthetic_blobs };
enum class Split { train, test };
enum class Augmentation { standard_crop_flip, none };

const char* to_string(DatasetName n);
const char* to_string(Split s);
const char* to_string(Augmentation a);
DatasetName dataset_name_from(const std::string& s);
Split split_from(const std::string& s);
Augmentation augmentation_from(const std::string& s);

/// Number of classes a dataset declares, before any subsetting.
int declared_classes(DatasetName name);

// Which classes a spec retains. Retained samples keep their original labels
// (no remapping), so models trained on the full label space stay comparable.
struct ClassSubset {
  enum class Kind { all, first_n, explicit_list };
  Kind kind = Kind::all;
  int n = 0;
  std::vector<int> list;

  bool keeps(int label) const;
};

struct DatasetSpec {
  DatasetName name = DatasetName::synthetic_blobs;
  Split split = Split::train;
  ClassSubset subset;
  double ratio = 1.0;  // per-class fraction retained, applied in file order
  Augmentation augmentation = Augmentation::none;
  std::uint64_t seed = 0;
  std::string root = "data";   // on-disk root for the published datasets
  int synthetic_per_class = 100;

  void validate() const;
  std::string id() const;
};

// A fully materialized split: normalized float images plus labels. Desk-scale
// datasets fit in memory; loading is strictly deterministic in file order.
struct Dataset {
  Tensor images;  // N x C x H x W
  std::vector<int> labels;
  int num_classes = 0;
  std::string source;

  int size() const { return images.n(); }
};

/// Loads (or generates) the split a spec describes, applying its class subset
/// and ratio reductions. Missing on-disk data raises a fetch-instruction
/// error naming the archive to download — nothing downloads silently.
Dataset load(const DatasetSpec& spec);

/// Restricts training to the first `n` classes of the declared order.
DatasetSpec reduce_classes(DatasetSpec spec, int n);

/// Evaluation spec for the complement subset: the classes a reduced run
/// held out, on the test split.
DatasetSpec held_out_complement(DatasetSpec spec, int n);

/// Deterministically permutes the label column. The images are untouched, so
/// any training path that ignores labels must produce identical results on
/// the poisoned set.
Dataset poison_labels(Dataset d, std::uint64_t seed);

/// Standard pad-4 random-crop plus horizontal-flip augmentation. Padding is
/// zero-valued (the per-channel mean, post-normalization).
Tensor augment_crop_flip(const Tensor& images, Rng& rng);

// The only view of a dataset that label-free training paths accept: images
// reachable, labels not.
class LabelFreeView {
 public:
  explicit LabelFreeView(const Dataset& d) : images_(&d.images) {}
  const Tensor& images() const { return *images_; }
  int size() const { return images_->n(); }

 private:
  const Tensor* images_;
};

/// Per-class sample counts (index = label), length num_classes.
std::vector<int> class_counts(const Dataset& d);

}  // namespace catkd::data
