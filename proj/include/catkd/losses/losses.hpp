// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "catkd/cam/stack.hpp"
#include "catkd/cam/transforms.hpp"
#include "catkd/error.hpp"
#include "catkd/mat.hpp"

namespace catkd::losses {

using cam::CamStackT;

// Whether map normalization is applied before the transfer distance. The
// auto rule follows architecture similarity and must be resolved to a
// concrete choice (and logged) before any training step runs.
enum class NormalizeRule { always, never, auto_by_architecture };

inline const char* to_string(NormalizeRule r) {
  switch (r) {
    case NormalizeRule::always: return "always";
    case NormalizeRule::never: return "never";
    case NormalizeRule::auto_by_architecture: return "auto-by-architecture";
  }
  return "?";
}

struct DistillConfig {
  double beta = 0.0;
  cam::TransformConfig transform;
  NormalizeRule normalize_rule = NormalizeRule::always;
  double temperature = 4.0;   // baseline logit-KD only
  double kd_weight = 0.9;     // baseline logit-KD only

  void validate() const {
    transform.validate();
    if (beta < 0.0) fail(ErrorKind::Config, "beta must be nonnegative");
    if (!(temperature > 0.0)) fail(ErrorKind::Config, "temperature must be positive");
  }

  // Concrete norm for the transfer distance. `same_architecture` comes from
  // comparing the pair's backbone families; normalization is applied when
  // the two structures differ.
  cam::NormOrder resolved_norm(bool same_architecture) const {
    switch (normalize_rule) {
      case NormalizeRule::always: return transform.norm;
      case NormalizeRule::never: return cam::NormOrder::none;
      case NormalizeRule::auto_by_architecture:
        return same_architecture ? cam::NormOrder::none : transform.norm;
    }
    return transform.norm;
  }
};

/// Softmax cross-entropy, averaged over the batch. Optionally writes the
/// gradient w.r.t. the logits (softmax minus one-hot, scaled by 1/N).
template <typename T>
T ce_loss(const MatT<T>& logits, const std::vector<int>& labels, MatT<T>* grad = nullptr) {
  if (logits.rows == 0 || logits.cols == 0)
    fail(ErrorKind::InputShape, "ce_loss: empty logits");
  if (static_cast<int>(labels.size()) != logits.rows)
    fail(ErrorKind::Label, "ce_loss: " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(logits.rows) + " rows");
  const int n = logits.rows;
  const int k = logits.cols;
  for (int i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= k)
      fail(ErrorKind::Label, "ce_loss: label " + std::to_string(labels[i]) +
                                 " outside [0, " + std::to_string(k) + ")");

  if (grad) *grad = MatT<T>(n, k);
  T total = T(0);
  std::vector<T> p(k);
  for (int i = 0; i < n; ++i) {
    const T* row = logits.row(i);
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    total += std::log(sum) - (row[labels[i]] - mx);
    if (grad) {
      T* g = grad->row(i);
      const T inv_sum = T(1) / sum;
      for (int j = 0; j < k; ++j) g[j] = p[j] * inv_sum / static_cast<T>(n);
      g[labels[i]] -= T(1) / static_cast<T>(n);
    }
  }
  return total / static_cast<T>(n);
}

namespace detail {

// Gradient of term = ||v/(|v|+eps) - p||^2 w.r.t. v, where p is a constant
// unit-scale target and |v| is the l1 or l2 norm. `coeff` premultiplies.
template <typename T>
void add_normalized_diff_grad(const T* v, const T* q, const T* p, std::size_t len,
                              cam::NormOrder order, T denom, T raw_norm, T coeff, T* out) {
  // d/dv ||q - p||^2 with q = v / denom, denom = raw_norm + eps:
  //   2(q-p)/denom  -  (d raw_norm/dv) * (2(q-p)·v) / denom^2
  T dot = T(0);
  for (std::size_t i = 0; i < len; ++i) dot += (q[i] - p[i]) * v[i];
  const T a = T(2) * coeff / denom;
  const T b = T(2) * coeff * dot / (denom * denom);
  if (order == cam::NormOrder::l2) {
    const T inv_norm = raw_norm > T(0) ? T(1) / raw_norm : T(0);
    for (std::size_t i = 0; i < len; ++i)
      out[i] += a * (q[i] - p[i]) - b * v[i] * inv_norm;
  } else {  // l1: d|v|_1/dv_i = sign(v_i)
    for (std::size_t i = 0; i < len; ++i) {
      const T s = v[i] > T(0) ? T(1) : (v[i] < T(0) ? T(-1) : T(0));
      out[i] += a * (q[i] - p[i]) - b * s;
    }
  }
}

}  // namespace detail

/// Transfer distance between two pooled map stacks: the mean over the batch
/// of (1/K) * sum_i || n(A_i^T) - n(A_i^S) ||_2^2, where n scales each
/// flattened map to unit norm (or is the identity when `norm` is none).
/// When `subsets` is given (one index list per sample), the sum runs over
/// that sample's subset with coefficient 1/|subset|.
///
/// The value is symmetric in its two stacks. Gradients, when requested via
/// `grad_student`, flow only into the student side (the teacher is a frozen
/// producer); the gradient is taken w.r.t. the student maps as passed in,
/// i.e. through the internal normalization.
template <typename T>
T cat_loss(const CamStackT<T>& a_t, const CamStackT<T>& a_s, cam::NormOrder norm,
           double epsilon = 1e-12, const std::vector<std::vector<int>>* subsets = nullptr,
           TensorT<T>* grad_student = nullptr) {
  if (a_t.empty() || a_s.empty())
    fail(ErrorKind::IncompatibleStacks, "cat_loss: empty stack");
  if (!a_t.pooled || !a_s.pooled)
    fail(ErrorKind::IncompatibleStacks, "cat_loss: both stacks must be pooled, got " +
                                            a_t.provenance() + " vs " + a_s.provenance());
  if (!a_t.maps.same_shape(a_s.maps))
    fail(ErrorKind::IncompatibleStacks, "cat_loss: stack shapes differ");
  if (a_t.normalized != a_s.normalized)
    fail(ErrorKind::IncompatibleStacks, "cat_loss: normalization states differ (" +
                                            a_t.provenance() + " vs " + a_s.provenance() + ")");

  const int n = a_t.batch();
  const int k = a_t.categories();
  const std::size_t len = a_t.maps.plane_size();
  const bool apply_norm = norm != cam::NormOrder::none && a_s.normalized == cam::NormOrder::none;
  const T eps = static_cast<T>(epsilon);

  if (subsets) {
    if (static_cast<int>(subsets->size()) != n)
      fail(ErrorKind::Policy, "cat_loss: need one category subset per sample");
    for (const auto& s : *subsets) {
      if (s.empty()) fail(ErrorKind::Policy, "cat_loss: empty category subset");
      for (int idx : s)
        if (idx < 0 || idx >= k) fail(ErrorKind::Policy, "cat_loss: subset index out of range");
    }
  }
  if (grad_student) {
    if (a_s.binarized)
      fail(ErrorKind::InvalidProvenance,
           "cat_loss: cannot differentiate through a binarized student stack");
    *grad_student = TensorT<T>(n, k, a_t.height(), a_t.width());
  }

  std::vector<T> qt(len), qs(len);
  std::vector<int> all;
  if (!subsets) {
    all.resize(k);
    for (int i = 0; i < k; ++i) all[i] = i;
  }

  T total = T(0);
  for (int in = 0; in < n; ++in) {
    const std::vector<int>& cats = subsets ? (*subsets)[in] : all;
    const T coeff = T(1) / static_cast<T>(cats.size());
    for (int i : cats) {
      const T* t = a_t.maps.plane(in, i);
      const T* s = a_s.maps.plane(in, i);
      const T* pt = t;
      const T* ps = s;
      T s_norm = T(0), s_denom = T(1);
      if (apply_norm) {
        const T t_norm = cam::detail::flat_norm(t, len, norm);
        s_norm = cam::detail::flat_norm(s, len, norm);
        const T t_scale = T(1) / (t_norm + eps);
        s_denom = s_norm + eps;
        const T s_scale = T(1) / s_denom;
        for (std::size_t p = 0; p < len; ++p) {
          qt[p] = t[p] * t_scale;
          qs[p] = s[p] * s_scale;
        }
        pt = qt.data();
        ps = qs.data();
      }
      T dist = T(0);
      for (std::size_t p = 0; p < len; ++p) {
        const T d = pt[p] - ps[p];
        dist += d * d;
      }
      total += coeff * dist;

      if (grad_student) {
        T* g = grad_student->plane(in, i);
        const T batch_coeff = coeff / static_cast<T>(n);
        if (apply_norm) {
          detail::add_normalized_diff_grad(s, ps, pt, len, norm, s_denom, s_norm,
                                           batch_coeff, g);
        } else {
          for (std::size_t p = 0; p < len; ++p)
            g[p] += T(2) * batch_coeff * (ps[p] - pt[p]);
        }
      }
    }
  }
  return total / static_cast<T>(n);
}

template <typename T>
T cat_loss(const CamStackT<T>& a_t, const CamStackT<T>& a_s, const DistillConfig& cfg,
           bool same_architecture = false,
           const std::vector<std::vector<int>>* subsets = nullptr,
           TensorT<T>* grad_student = nullptr) {
  cfg.validate();
  return cat_loss(a_t, a_s, cfg.resolved_norm(same_architecture), cfg.transform.epsilon,
                  subsets, grad_student);
}

// Component values of the composite distillation loss.
template <typename T>
struct CatKdParts {
  T ce = T(0);
  T cat = T(0);
  T total = T(0);
};

/// Composite loss: cross-entropy on the student's logits plus beta times the
/// transfer distance. Gradients (optional) split naturally: `grad_logits`
/// carries the CE part, `grad_student_cams` carries beta times the transfer
/// part.
template <typename T>
CatKdParts<T> catkd_loss(const MatT<T>& student_logits, const std::vector<int>& labels,
                         const CamStackT<T>& a_t, const CamStackT<T>& a_s,
                         const DistillConfig& cfg, bool same_architecture = false,
                         const std::vector<std::vector<int>>* subsets = nullptr,
                         MatT<T>* grad_logits = nullptr,
                         TensorT<T>* grad_student_cams = nullptr) {
  cfg.validate();
  CatKdParts<T> parts;
  parts.ce = ce_loss(student_logits, labels, grad_logits);
  parts.cat = cat_loss(a_t, a_s, cfg, same_architecture, subsets, grad_student_cams);
  const T beta = static_cast<T>(cfg.beta);
  if (grad_student_cams && beta != T(1)) {
    for (std::size_t i = 0; i < grad_student_cams->size(); ++i) (*grad_student_cams)[i] *= beta;
  }
  parts.total = parts.ce + beta * parts.cat;
  return parts;
}

/// Vanilla logit-distillation baseline: CE + weight * T^2 * KL(p_T || p_S)
/// with temperature-softened softmaxes, averaged over the batch.
template <typename T>
T kd_baseline_loss(const MatT<T>& student_logits, const MatT<T>& teacher_logits,
                   const std::vector<int>& labels, double temperature, double weight,
                   MatT<T>* grad = nullptr) {
  if (!(temperature > 0.0)) fail(ErrorKind::Config, "kd_baseline_loss: temperature must be positive");
  if (student_logits.rows != teacher_logits.rows || student_logits.cols != teacher_logits.cols)
    fail(ErrorKind::IncompatibleStacks, "kd_baseline_loss: logit shapes differ");

  const T ce = ce_loss(student_logits, labels, grad);

  const int n = student_logits.rows;
  const int k = student_logits.cols;
  const T temp = static_cast<T>(temperature);
  const T w = static_cast<T>(weight);
  std::vector<T> ps(k), pt(k);
  T kl_total = T(0);
  for (int i = 0; i < n; ++i) {
    const T* srow = student_logits.row(i);
    const T* trow = teacher_logits.row(i);
    T smax = srow[0] / temp, tmax = trow[0] / temp;
    for (int j = 1; j < k; ++j) {
      smax = std::max(smax, srow[j] / temp);
      tmax = std::max(tmax, trow[j] / temp);
    }
    T ssum = T(0), tsum = T(0);
    for (int j = 0; j < k; ++j) {
      ps[j] = std::exp(srow[j] / temp - smax);
      pt[j] = std::exp(trow[j] / temp - tmax);
      ssum += ps[j];
      tsum += pt[j];
    }
    T kl = T(0);
    for (int j = 0; j < k; ++j) {
      ps[j] /= ssum;
      pt[j] /= tsum;
      if (pt[j] > T(0)) kl += pt[j] * (std::log(pt[j]) - std::log(ps[j]));
    }
    kl_total += kl;
    if (grad) {
      // d/ds_j [T^2 * KL] = T * (softmax(s/T)_j - softmax(t/T)_j)
      T* g = grad->row(i);
      for (int j = 0; j < k; ++j)
        g[j] += w * temp * (ps[j] - pt[j]) / static_cast<T>(n);
    }
  }
  return ce + w * temp * temp * kl_total / static_cast<T>(n);
}

}  // namespace catkd::losses
