// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "catkd/error.hpp"

namespace catkd {

// Dense NCHW tensor. The toolkit trains in float; head/CAM/loss math is also
// instantiated for double so oracle and gradient tests can run in wide floats.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  TensorT(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w), v_(static_cast<std::size_t>(n) * c * h * w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) fail(ErrorKind::InputShape, "negative tensor dimension");
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  // (x, y) follow image convention: x indexes width, y indexes height.
  T& at(int in, int ic, int y, int x) { return v_[offset(in, ic, y, x)]; }
  const T& at(int in, int ic, int y, int x) const { return v_[offset(in, ic, y, x)]; }

  std::size_t offset(int in, int ic, int y, int x) const {
    return ((static_cast<std::size_t>(in) * c_ + ic) * h_ + y) * w_ + x;
  }

  /// Pointer to the (n, c) plane of h*w values.
  T* plane(int in, int ic) { return v_.data() + offset(in, ic, 0, 0); }
  const T* plane(int in, int ic) const { return v_.data() + offset(in, ic, 0, 0); }

  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }
  void zero() { fill(T(0)); }

  bool same_shape(const TensorT& other) const {
    return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
  }

  bool all_finite() const {
    for (const T& x : v_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = static_cast<U>(v_[i]);
    return out;
  }

  /// View of sample `in` as a 1-sample tensor (copies the data).
  TensorT slice(int in) const {
    TensorT out(1, c_, h_, w_);
    std::copy(plane(in, 0), plane(in, 0) + sample_size(), out.data());
    return out;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> v_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace catkd
