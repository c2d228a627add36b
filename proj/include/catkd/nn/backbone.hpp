// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "catkd/nn/layers.hpp"
#include "catkd/rng.hpp"
#include "catkd/tensor.hpp"

namespace catkd::nn {

// Declarative description of a feature extractor. `cam_w`/`cam_h` declare the
// spatial resolution of the final-convolution output; construction verifies
// the declaration with a dry-run forward pass. Leave them 0 to accept the
// family default.
struct BackboneSpec {
  std::string family = "tiny-cnn";  // tiny-cnn | resnet-cifar | resnet8x4-style |
                                    // wrn-style | vgg-style
  int depth = 3;                    // family-specific depth knob
  int width = 1;                    // channel multiplier
  int in_channels = 3;
  int in_h = 32;
  int in_w = 32;
  int cam_w = 0;
  int cam_h = 0;

  std::string id() const {
    return family + "-d" + std::to_string(depth) + "-w" + std::to_string(width);
  }
  bool same_architecture(const BackboneSpec& other) const { return family == other.family; }
};

/// One representative spec per supported configuration. Conversion-identity
/// checks and the CLI's verify command iterate exactly this list.
std::vector<BackboneSpec> backbone_zoo();

// A feature extractor built from a BackboneSpec: stem + stages, ending at
// the last convolution's activations (no pooling, no classifier — heads are
// applied by the caller).
class Backbone {
 public:
  // Builds the layer stack, initializes parameters from `rng`, and verifies
  // the declared CAM resolution with a dry-run forward pass.
  Backbone(const BackboneSpec& spec, Rng& rng);

  Tensor forward_features(const Tensor& batch, bool train);
  Tensor backward(const Tensor& dfeatures) { return body_.backward(dfeatures); }

  void collect_params(std::vector<ParamRef>& out) { body_.collect_params("body.", out); }
  void collect_buffers(std::vector<BufferRef>& out) { body_.collect_buffers("body.", out); }
  void zero_grad() { body_.zero_grad(); }

  const BackboneSpec& spec() const { return spec_; }
  int feature_channels() const { return feature_channels_; }

 private:
  BackboneSpec spec_;
  Sequential body_;
  int feature_channels_ = 0;
};

}  // namespace catkd::nn
