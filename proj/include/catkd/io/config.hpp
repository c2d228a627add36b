// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "catkd/data/dataset.hpp"
#include "catkd/losses/losses.hpp"
#include "catkd/nn/backbone.hpp"
#include "catkd/trainer/trainer.hpp"

namespace catkd::io {

inline constexpr int kConfigSchemaVersion = 1;

// Everything a run needs, resolved. A config plus its seeds reproduces a run
// bit-identically in deterministic mode, which is why the hash of this
// structure keys resumability and run directories.
struct RunConfig {
  std::string method = "catkd";  // ce | cat | catkd | kd-baseline
  bool head_bias = true;
  std::string run_root = "runs";
  std::string teacher_checkpoint;  // explicit path; empty = train or reuse by hash

  nn::BackboneSpec teacher;
  nn::BackboneSpec student;
  data::DatasetSpec dataset;               // training split
  int synthetic_eval_per_class = 20;       // test-split size for the synthetic task
  trainer::TrainSchedule schedule;         // student / main schedule
  trainer::TrainSchedule teacher_schedule; // teacher pretraining schedule
  losses::DistillConfig distill;

  void validate() const;
};

/// Canonical JSON form. Keys are sorted (nlohmann object order), so the dump
/// is stable and hashable.
nlohmann::json to_json(const RunConfig& cfg);

/// Strict inverse of to_json: unknown or ill-typed keys raise a config error
/// naming the offending key. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// Serialized canonical form (pretty JSON). parse(serialize(c)) == c.
std::string serialize(const RunConfig& cfg);

/// Applies CATKD_-prefixed environment variables over scalar keys, e.g.
/// CATKD_SCHEDULE_LR=0.01, CATKD_DISTILL_BETA=100, CATKD_DATASET_RATIO=0.2,
/// CATKD_TEACHER_DEPTH=56, CATKD_METHOD=cat. Unparseable values raise a
/// config error naming the variable.
void apply_env_overrides(RunConfig& cfg);

/// 64-bit FNV-1a over the canonical dump, as 16 hex digits. `run_root` (pure
/// plumbing — where artifacts land) is excluded; everything else counts.
std::string config_hash(const RunConfig& cfg);

/// Recursive JSON object merge: scalars and arrays in `patch` replace, nested
/// objects merge. The grid mechanism: cell = merge(base, overrides).
nlohmann::json json_merge(nlohmann::json base, const nlohmann::json& patch);

}  // namespace catkd::io
