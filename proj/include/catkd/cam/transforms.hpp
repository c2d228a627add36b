// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <vector>

#include "catkd/cam/stack.hpp"
#include "catkd/error.hpp"

namespace catkd::cam {

// Which categories to transfer: all (no policy), the n best/worst scoring
// ones per sample, or a fixed explicit list.
struct SubsetPolicy {
  enum class Kind { top_n, bottom_n, explicit_list };
  Kind kind = Kind::top_n;
  int n = 0;                  // for top_n / bottom_n
  std::vector<int> list;      // for explicit_list
};

// Transform block of the run config: how maps are reduced before transfer.
struct TransformConfig {
  int pool_w = 2;
  int pool_h = 2;
  NormOrder norm = NormOrder::l2;
  double epsilon = 1e-12;
  bool binarize = false;
  std::optional<SubsetPolicy> subset;

  void validate() const {
    if (pool_w < 1 || pool_h < 1)
      fail(ErrorKind::InvalidTarget, "pool target must be at least 1x1");
    if (!(epsilon > 0.0)) fail(ErrorKind::Config, "epsilon must be positive");
  }
};

namespace detail {
// Adaptive window along one axis: output index p over src cells
// [floor(p*src/dst), ceil((p+1)*src/dst)). Total for any dst <= src; windows
// tile exactly when dst divides src and overlap by one cell otherwise.
inline std::pair<int, int> pool_window(int p, int dst, int src) {
  const int lo = static_cast<int>((static_cast<long long>(p) * src) / dst);
  const int hi = static_cast<int>((static_cast<long long>(p + 1) * src + dst - 1) / dst);
  return {lo, hi};
}
}  // namespace detail

/// Adaptive average pooling of every category map down to (w, h).
/// Must be the first transform applied; upsampling is refused.
template <typename T>
CamStackT<T> pool_cams(const CamStackT<T>& a, int target_w, int target_h) {
  if (a.empty()) fail(ErrorKind::InputShape, "pool_cams: empty stack");
  if (!a.raw())
    fail(ErrorKind::TransformOrder,
         "pool_cams: pooling must come first, stack is already " + a.provenance());
  if (target_w < 1 || target_h < 1)
    fail(ErrorKind::InvalidTarget, "pool_cams: target must be at least 1x1");
  if (target_w > a.width() || target_h > a.height())
    fail(ErrorKind::InvalidTarget,
         "pool_cams: target " + std::to_string(target_w) + "x" + std::to_string(target_h) +
             " exceeds source " + std::to_string(a.width()) + "x" + std::to_string(a.height()));

  CamStackT<T> out;
  out.producer = a.producer;
  out.binarized = a.binarized;
  out.normalized = a.normalized;
  out.pooled = std::make_pair(target_w, target_h);
  out.maps = TensorT<T>(a.batch(), a.categories(), target_h, target_w);

  for (int n = 0; n < a.batch(); ++n) {
    for (int k = 0; k < a.categories(); ++k) {
      const T* src = a.maps.plane(n, k);
      T* dst = out.maps.plane(n, k);
      for (int p = 0; p < target_h; ++p) {
        const auto [y0, y1] = detail::pool_window(p, target_h, a.height());
        for (int q = 0; q < target_w; ++q) {
          const auto [x0, x1] = detail::pool_window(q, target_w, a.width());
          T sum = T(0);
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) sum += src[y * a.width() + x];
          dst[p * target_w + q] = sum / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return out;
}

/// Transpose of pool_cams for backpropagation: spreads each pooled cell's
/// gradient uniformly over its source window (windows may overlap for
/// non-divisible sizes, in which case contributions add).
template <typename T>
TensorT<T> pool_cams_backward(const TensorT<T>& grad_pooled, int src_h, int src_w) {
  if (grad_pooled.empty()) fail(ErrorKind::InputShape, "pool_cams_backward: empty gradient");
  const int th = grad_pooled.h();
  const int tw = grad_pooled.w();
  if (th > src_h || tw > src_w)
    fail(ErrorKind::InvalidTarget, "pool_cams_backward: pooled size exceeds source");

  TensorT<T> grad(grad_pooled.n(), grad_pooled.c(), src_h, src_w);
  for (int n = 0; n < grad_pooled.n(); ++n) {
    for (int k = 0; k < grad_pooled.c(); ++k) {
      const T* g = grad_pooled.plane(n, k);
      T* dst = grad.plane(n, k);
      for (int p = 0; p < th; ++p) {
        const auto [y0, y1] = detail::pool_window(p, th, src_h);
        for (int q = 0; q < tw; ++q) {
          const auto [x0, x1] = detail::pool_window(q, tw, src_w);
          const T share = g[p * tw + q] / static_cast<T>((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) dst[y * src_w + x] += share;
        }
      }
    }
  }
  return grad;
}

namespace detail {
template <typename T>
T flat_norm(const T* p, std::size_t len, NormOrder order) {
  T acc = T(0);
  if (order == NormOrder::l1) {
    for (std::size_t i = 0; i < len; ++i) acc += std::abs(p[i]);
    return acc;
  }
  for (std::size_t i = 0; i < len; ++i) acc += p[i] * p[i];
  return std::sqrt(acc);
}
}  // namespace detail

/// Scales each category's flattened map by 1 / (norm + epsilon). The epsilon
/// keeps all-zero maps (common early in training) passing through as zero
/// instead of aborting. Order `none` is an explicit no-op.
template <typename T>
CamStackT<T> normalize_cams(const CamStackT<T>& a, NormOrder order, double epsilon = 1e-12) {
  if (a.empty()) fail(ErrorKind::InputShape, "normalize_cams: empty stack");
  if (a.normalized != NormOrder::none)
    fail(ErrorKind::TransformOrder, "normalize_cams: stack already normalized (" +
                                        a.provenance() + ")");
  if (!(epsilon > 0.0)) fail(ErrorKind::Config, "normalize_cams: epsilon must be positive");
  if (order == NormOrder::none) return a;

  CamStackT<T> out = a;
  out.normalized = order;
  const std::size_t len = a.maps.plane_size();
  for (int n = 0; n < a.batch(); ++n) {
    for (int k = 0; k < a.categories(); ++k) {
      T* p = out.maps.plane(n, k);
      const T scale = T(1) / (detail::flat_norm(p, len, order) + static_cast<T>(epsilon));
      for (std::size_t i = 0; i < len; ++i) p[i] *= scale;
    }
  }
  return out;
}

/// Thresholds each category map at its own mean: entries >= mean become 1,
/// the rest 0. The >= rule keeps constant maps active (all ones) and
/// guarantees at least one active entry per map. Must run before any
/// normalization — thresholding unit-norm maps would be meaningless.
template <typename T>
CamStackT<T> binarize_cams(const CamStackT<T>& a) {
  if (a.empty()) fail(ErrorKind::InputShape, "binarize_cams: empty stack");
  if (a.normalized != NormOrder::none)
    fail(ErrorKind::TransformOrder,
         "binarize_cams: must binarize before normalizing, stack is " + a.provenance());

  CamStackT<T> out = a;
  out.binarized = true;
  const std::size_t len = a.maps.plane_size();
  for (int n = 0; n < a.batch(); ++n) {
    for (int k = 0; k < a.categories(); ++k) {
      T* p = out.maps.plane(n, k);
      T mean = T(0);
      for (std::size_t i = 0; i < len; ++i) mean += p[i];
      mean /= static_cast<T>(len);
      for (std::size_t i = 0; i < len; ++i) p[i] = p[i] >= mean ? T(1) : T(0);
    }
  }
  return out;
}

/// Picks the categories a sample transfers, from its teacher logits: the n
/// highest (top_n) or lowest (bottom_n) scores, ties going to the lower
/// index; or a fixed explicit list. Returned indices are sorted ascending.
template <typename T>
std::vector<int> select_categories(const std::vector<T>& logits, const SubsetPolicy& policy) {
  const int k = static_cast<int>(logits.size());
  if (k == 0) fail(ErrorKind::InputShape, "select_categories: empty logits");

  if (policy.kind == SubsetPolicy::Kind::explicit_list) {
    if (policy.list.empty())
      fail(ErrorKind::Policy, "select_categories: explicit list is empty");
    std::vector<int> out = policy.list;
    std::sort(out.begin(), out.end());
    if (out.front() < 0 || out.back() >= k)
      fail(ErrorKind::Policy, "select_categories: explicit index out of range");
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
      fail(ErrorKind::Policy, "select_categories: duplicate explicit index");
    return out;
  }

  if (policy.n <= 0 || policy.n > k)
    fail(ErrorKind::Policy, "select_categories: n must be in [1, " + std::to_string(k) +
                                "], got " + std::to_string(policy.n));

  std::vector<int> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  const bool top = policy.kind == SubsetPolicy::Kind::top_n;
  // stable sort keeps equal scores in ascending-index order: lower index wins.
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return top ? logits[a] > logits[b] : logits[a] < logits[b];
  });
  idx.resize(policy.n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace catkd::cam
