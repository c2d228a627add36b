// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "catkd/error.hpp"
#include "catkd/mat.hpp"
#include "catkd/nn/head.hpp"
#include "catkd/tensor.hpp"

namespace catkd::cam {

// Which norm a stack has been scaled by (none = untouched magnitudes).
enum class NormOrder { none, l1, l2 };

inline const char* to_string(NormOrder o) {
  switch (o) {
    case NormOrder::none: return "none";
    case NormOrder::l1: return "l1";
    case NormOrder::l2: return "l2";
  }
  return "?";
}

// A batch of per-category class activation maps, shaped (batch, K, H, W),
// together with provenance describing which transforms have been applied.
// The flags are load-bearing: losses and transforms consult them to reject
// illegal orderings instead of silently producing garbage. Transforms return
// new stacks; nothing mutates a stack in place.
template <typename T>
struct CamStackT {
  TensorT<T> maps;  // N x K x H x W
  std::string producer;                       // model id that emitted the maps
  std::optional<std::pair<int, int>> pooled;  // (w, h) if pooling was applied
  NormOrder normalized = NormOrder::none;
  bool binarized = false;

  int batch() const { return maps.n(); }
  int categories() const { return maps.c(); }
  int height() const { return maps.h(); }
  int width() const { return maps.w(); }
  bool empty() const { return maps.empty(); }
  bool raw() const { return !pooled && normalized == NormOrder::none && !binarized; }

  std::string provenance() const {
    std::string s = pooled ? "pooled(" + std::to_string(pooled->first) + "x" +
                                 std::to_string(pooled->second) + ")"
                           : "unpooled";
    if (binarized) s += "+binarized";
    if (normalized != NormOrder::none) s += std::string("+") + to_string(normalized);
    return s;
  }

  template <typename U>
  CamStackT<U> cast() const {
    CamStackT<U> out;
    out.maps = maps.template cast<U>();
    out.producer = producer;
    out.pooled = pooled;
    out.normalized = normalized;
    out.binarized = binarized;
    return out;
  }
};

using CamStack = CamStackT<float>;
using CamStackD = CamStackT<double>;

/// Weighted channel sums: CAM_i(x, y) = sum_j w[i][j] * F_j(x, y).
/// One map per category, at feature-map resolution. The head bias does not
/// enter the maps — it is spatially constant and belongs to the logit stage.
template <typename T>
CamStackT<T> compute_cams(const TensorT<T>& features, const nn::HeadParamsT<T>& head,
                          std::string producer = {}) {
  if (features.empty()) fail(ErrorKind::InputShape, "compute_cams: empty feature map");
  head.validate();
  if (head.channels() != features.c())
    fail(ErrorKind::HeadShape,
         "compute_cams: head expects " + std::to_string(head.channels()) +
             " channels, feature map has " + std::to_string(features.c()));

  const int n = features.n();
  const int k = head.num_categories();
  const int c = features.c();
  const std::size_t hw = features.plane_size();

  CamStackT<T> out;
  out.producer = std::move(producer);
  out.maps = TensorT<T>(n, k, features.h(), features.w());
  for (int in = 0; in < n; ++in) {
    for (int i = 0; i < k; ++i) {
      T* dst = out.maps.plane(in, i);
      const T* w = head.weights.row(i);
      for (int j = 0; j < c; ++j) {
        const T wj = w[j];
        if (wj == T(0)) continue;
        const T* src = features.plane(in, j);
        for (std::size_t p = 0; p < hw; ++p) dst[p] += wj * src[p];
      }
    }
  }
  return out;
}

/// Converts a dense head into its 1x1-convolution form. The returned params
/// are value-identical — conversion reinterprets the weights (they act before
/// spatial pooling instead of after) and never retrains. Kept as an explicit
/// step so callers can verify the logit identity and so checkpoints record
/// which form ran.
template <typename T>
nn::HeadParamsT<T> convert_head(const nn::HeadParamsT<T>& dense) {
  dense.validate();
  return dense;  // 1x1 kernel [K][C][1][1] carries the same K x C values
}

/// Logits via the converted path: L_i = GAP(CAM_i) (+ bias_i). On raw maps
/// this equals the dense head's logits exactly — the identity that makes the
/// converted head safe to swap in. Transformed maps are rejected: predictions
/// from pooled/normalized/binarized maps would be meaningless.
template <typename T>
MatT<T> logits_from_cams(const CamStackT<T>& cams,
                         const std::optional<std::vector<T>>& bias = std::nullopt) {
  if (cams.empty()) fail(ErrorKind::InputShape, "logits_from_cams: empty stack");
  if (!cams.raw())
    fail(ErrorKind::InvalidProvenance,
         "logits_from_cams: needs raw maps, got " + cams.provenance());
  if (bias && static_cast<int>(bias->size()) != cams.categories())
    fail(ErrorKind::HeadShape, "logits_from_cams: bias length != category count");

  MatT<T> logits = nn::gap(cams.maps);
  if (bias) {
    for (int n = 0; n < logits.rows; ++n)
      for (int i = 0; i < logits.cols; ++i) logits(n, i) += (*bias)[i];
  }
  return logits;
}

}  // namespace catkd::cam
