// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace catkd {

/// Failure categories surfaced by the toolkit. Tests and callers dispatch on
/// the kind rather than parsing messages.
enum class ErrorKind {
  InputShape,        // batch/tensor shape does not match the consumer
  HeadShape,         // classifier head incompatible with the feature map
  InvalidProvenance, // CAM stack is in the wrong transform state for the op
  InvalidTarget,     // pooling target larger than the source resolution
  TransformOrder,    // transform applied out of the legal pipeline order
  Policy,            // category-selection or class-reduction policy misuse
  IncompatibleStacks,// teacher/student CAM stacks disagree in shape or state
  Label,             // label outside [0, K)
  Config,            // unparseable or inconsistent run configuration
  FetchInstruction,  // dataset missing on disk; message tells how to get it
  Divergence,        // training produced a non-finite loss
  Schema,            // table/record schema mismatch
  Io,                // filesystem or serialization failure
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InputShape: return "input-shape error";
    case ErrorKind::HeadShape: return "head-shape error";
    case ErrorKind::InvalidProvenance: return "invalid-provenance error";
    case ErrorKind::InvalidTarget: return "invalid-target error";
    case ErrorKind::TransformOrder: return "transform-order error";
    case ErrorKind::Policy: return "policy error";
    case ErrorKind::IncompatibleStacks: return "incompatible-stacks error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::FetchInstruction: return "fetch-instruction error";
    case ErrorKind::Divergence: return "divergence error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

}  // namespace catkd
