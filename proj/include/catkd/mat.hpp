// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace catkd {

/// Row-major matrix. Used for logits (batch x classes), pooled channel means
/// (batch x channels) and classifier weights (classes x channels).
template <typename T>
struct MatT {
  int rows = 0, cols = 0;
  std::vector<T> v;

  MatT() = default;
  MatT(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}

  T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return v.size(); }

  template <typename U>
  MatT<U> cast() const {
    MatT<U> out(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using Mat = MatT<float>;
using MatD = MatT<double>;

}  // namespace catkd
