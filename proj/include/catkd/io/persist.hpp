// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catkd/cam/stack.hpp"
#include "catkd/nn/model.hpp"
#include "catkd/trainer/trainer.hpp"

namespace catkd::io {

inline constexpr int kTableSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "catkd-0.1.0";

/// Writes contents to a sibling temp file, then renames into place — readers
/// never observe a half-written artifact.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

// ------------------------------------------------------------ checkpoints --

/// Binary model checkpoint: a JSON header (backbone spec, head layout,
/// producer id, named array index) followed by raw little-endian float32
/// parameter and buffer payloads.
void save_model(const std::filesystem::path& path, nn::Model& model);

/// Reconstructs the model a checkpoint describes. Truncated files, bad magic,
/// and mismatched array sizes raise io/schema errors.
nn::Model load_model(const std::filesystem::path& path);

// ---------------------------------------------------------- metric tables --

/// Metrics stream as delimiter-separated text. First column is the schema
/// version so readers can dispatch; floats are written round-trip exact.
void write_metrics_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::vector<trainer::MetricRecord>& records);
std::vector<trainer::MetricRecord> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------- result tables --

/// One experiment-grid result: raw rows (one per cell x seed) and aggregate
/// rows (mean/std per cell). `values` aligns with `columns`.
struct ResultRow {
  std::string cell;         // human-readable cell label, e.g. "pool=4x4"
  std::string config_hash;  // full resolved config hash of the cell run
  std::string seed;         // decimal seed, or "-" on aggregate rows
  std::string row_kind;     // run | mean | std | failed
  std::vector<double> values;
  std::string note;         // failure diagnostics
};

struct ResultTable {
  std::string schema_id;  // e.g. "pool-size-sweep/v1"
  std::vector<std::string> columns;
  std::vector<ResultRow> rows;
};

void write_result_csv(const std::filesystem::path& path, const ResultTable& table);
ResultTable read_result_csv(const std::filesystem::path& path);

// -------------------------------------------------------------- CAM dumps --

/// Portable array dump (NPY v1.0, little-endian float32, C order) of a CAM
/// stack plus a JSON sidecar recording producer and transform provenance.
void save_cam_stack(const std::filesystem::path& path, const cam::CamStack& stack);
Tensor load_npy(const std::filesystem::path& path);

// --------------------------------------------------------------- manifest --

/// The one record every artifact hangs off. Written (status "running") before
/// training starts; finalized (status "complete"/"failed", end timestamp,
/// artifact list) when the run ends.
struct RunManifest {
  std::string config_hash;
  nlohmann::json config_snapshot;
  std::vector<std::uint64_t> seeds;
  std::string code_version = kCodeVersion;
  std::string started_at;
  std::string finished_at;
  std::string status = "running";
  std::vector<std::string> artifacts;  // paths relative to the run directory
};

/// runs/<hash>/ directory for a config hash, created on demand.
std::filesystem::path run_dir(const std::string& run_root, const std::string& hash);

std::string now_iso8601();

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& dir);

}  // namespace catkd::io
