// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "catkd/cam/stack.hpp"
#include "catkd/mat.hpp"
#include "catkd/nn/backbone.hpp"
#include "catkd/nn/head.hpp"
#include "catkd/rng.hpp"
#include "catkd/tensor.hpp"

namespace catkd::nn {

// A classifier: backbone plus head. The head runs in either of the two
// equivalent forms — dense (pool, then weights) or converted (weights as a
// 1x1 convolution, then pool). Both forms read the same parameter storage,
// so there is nothing to keep in sync; `convert_head` is the explicit,
// verifiable statement of that equivalence.
class Model {
 public:
  Model(const BackboneSpec& spec, int num_categories, bool head_bias, Rng& rng);

  Tensor forward_features(const Tensor& batch, bool train) {
    return backbone_.forward_features(batch, train);
  }

  // Dense path (original head form).
  Mat logits_dense_path(const Tensor& features) const {
    return logits_dense(features, head_);
  }

  // Converted path: CAMs as a forward-pass byproduct, logits by averaging.
  cam::CamStack cams(const Tensor& features) const {
    return cam::compute_cams(features, cam::convert_head(head_), producer_);
  }
  Mat logits_converted_path(const cam::CamStack& cams) const {
    return cam::logits_from_cams(cams, head_.bias);
  }

  // Accumulates head gradients from d(loss)/d(logits) via the dense path and
  // backpropagates through the backbone.
  void backward_dense(const Tensor& features, const Mat& dlogits);

  // Accumulates head gradients from d(loss)/d(raw CAM entries) (optional)
  // plus d(loss)/d(logits) (optional), then backpropagates. Used by the
  // distillation loops, where gradients arrive on both artifacts.
  void backward_converted(const Tensor& features, const Mat* dlogits, const Tensor* dcams);

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  void zero_grad();

  HeadParams& head() { return head_; }
  const HeadParams& head() const { return head_; }
  Backbone& backbone() { return backbone_; }
  const BackboneSpec& spec() const { return backbone_.spec(); }
  int num_categories() const { return head_.num_categories(); }

  const std::string& producer() const { return producer_; }
  void set_producer(std::string id) { producer_ = std::move(id); }

 private:
  Backbone backbone_;
  HeadParams head_;
  Mat gw_;  // d(loss)/d(head weights)
  std::vector<float> gbias_;
  std::string producer_;
};

/// Top-1 predictions from a logit matrix (ties to the lower index).
std::vector<int> argmax_rows(const Mat& logits);

}  // namespace catkd::nn
