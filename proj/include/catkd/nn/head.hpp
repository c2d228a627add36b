// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "catkd/error.hpp"
#include "catkd/mat.hpp"
#include "catkd/tensor.hpp"

namespace catkd::nn {

// Classifier head parameters. The same values serve both head forms: the
// dense head (GAP then weights) and the 1x1-convolution head (weights then
// GAP). Conversion between the two copies values and never retrains.
template <typename T>
struct HeadParamsT {
  MatT<T> weights;               // K x C
  std::optional<std::vector<T>> bias;  // length K

  int num_categories() const { return weights.rows; }
  int channels() const { return weights.cols; }

  void validate() const {
    if (weights.rows < 2) fail(ErrorKind::HeadShape, "head needs at least 2 categories");
    if (weights.cols < 1) fail(ErrorKind::HeadShape, "head needs at least 1 channel");
    if (bias && static_cast<int>(bias->size()) != weights.rows)
      fail(ErrorKind::HeadShape, "bias length does not match category count");
  }

  template <typename U>
  HeadParamsT<U> cast() const {
    HeadParamsT<U> out;
    out.weights = weights.template cast<U>();
    if (bias) out.bias = std::vector<U>(bias->begin(), bias->end());
    return out;
  }
};

using HeadParams = HeadParamsT<float>;
using HeadParamsD = HeadParamsT<double>;

/// Global average pooling: per-sample, per-channel spatial mean.
/// Returns a (batch x channels) matrix.
template <typename T>
MatT<T> gap(const TensorT<T>& f) {
  if (f.empty()) fail(ErrorKind::InputShape, "gap: empty feature map");
  MatT<T> out(f.n(), f.c());
  const T inv = T(1) / static_cast<T>(f.plane_size());
  for (int n = 0; n < f.n(); ++n) {
    for (int c = 0; c < f.c(); ++c) {
      const T* p = f.plane(n, c);
      T sum = T(0);
      for (std::size_t i = 0; i < f.plane_size(); ++i) sum += p[i];
      out(n, c) = sum * inv;
    }
  }
  return out;
}

/// Dense-head logits: L_i = sum_j w[i][j] * gap(F)[j] (+ bias_i).
template <typename T>
MatT<T> logits_dense(const TensorT<T>& f, const HeadParamsT<T>& head) {
  if (head.channels() != f.c())
    fail(ErrorKind::HeadShape, "head expects " + std::to_string(head.channels()) +
                                   " channels, feature map has " + std::to_string(f.c()));
  const MatT<T> pooled = gap(f);
  const int k = head.num_categories();
  MatT<T> logits(f.n(), k);
  for (int n = 0; n < f.n(); ++n) {
    for (int i = 0; i < k; ++i) {
      T acc = T(0);
      const T* w = head.weights.row(i);
      const T* g = pooled.row(n);
      for (int j = 0; j < f.c(); ++j) acc += w[j] * g[j];
      if (head.bias) acc += (*head.bias)[i];
      logits(n, i) = acc;
    }
  }
  return logits;
}

}  // namespace catkd::nn
