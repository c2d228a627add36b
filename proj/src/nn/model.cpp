// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/nn/model.hpp"

#include <cmath>

#include "catkd/error.hpp"

namespace catkd::nn {

Model::Model(const BackboneSpec& spec, int num_categories, bool head_bias, Rng& rng)
    : backbone_(spec, rng), producer_(spec.id()) {
  if (num_categories < 2) fail(ErrorKind::HeadShape, "model: need at least 2 categories");
  const int c = backbone_.feature_channels();
  head_.weights = Mat(num_categories, c);
  // Uniform fan-in init, the convention for a final linear layer.
  const float bound = 1.f / std::sqrt(static_cast<float>(c));
  for (auto& v : head_.weights.v) v = rng.uniform(-bound, bound);
  if (head_bias) {
    head_.bias.emplace(num_categories);
    for (auto& v : *head_.bias) v = rng.uniform(-bound, bound);
  }
  gw_ = Mat(num_categories, c);
  gbias_.assign(head_bias ? num_categories : 0, 0.f);
}

void Model::backward_dense(const Tensor& features, const Mat& dlogits) {
  const int n = features.n();
  const int c = features.c();
  const int k = head_.num_categories();
  if (dlogits.rows != n || dlogits.cols != k)
    fail(ErrorKind::HeadShape, "backward_dense: gradient shape mismatch");

  const Mat pooled = gap(features);
  Tensor dfeat(n, c, features.h(), features.w());
  const float inv_hw = 1.f / static_cast<float>(features.plane_size());

  for (int in = 0; in < n; ++in) {
    const float* dl = dlogits.row(in);
    const float* g = pooled.row(in);
    for (int i = 0; i < k; ++i) {
      const float d = dl[i];
      if (d == 0.f) continue;
      float* gw = gw_.row(i);
      const float* w = head_.weights.row(i);
      for (int j = 0; j < c; ++j) gw[j] += d * g[j];
      if (head_.bias) gbias_[i] += d;
      for (int j = 0; j < c; ++j) {
        const float spread = d * w[j] * inv_hw;
        float* plane = dfeat.plane(in, j);
        for (std::size_t p = 0; p < dfeat.plane_size(); ++p) plane[p] += spread;
      }
    }
  }
  backbone_.backward(dfeat);
}

void Model::backward_converted(const Tensor& features, const Mat* dlogits, const Tensor* dcams) {
  const int n = features.n();
  const int c = features.c();
  const int k = head_.num_categories();
  const std::size_t hw = features.plane_size();
  if (!dlogits && !dcams)
    fail(ErrorKind::Config, "backward_converted: no gradient supplied");
  if (dlogits && (dlogits->rows != n || dlogits->cols != k))
    fail(ErrorKind::HeadShape, "backward_converted: logit gradient shape mismatch");
  if (dcams && (dcams->n() != n || dcams->c() != k || dcams->h() != features.h() ||
                dcams->w() != features.w()))
    fail(ErrorKind::HeadShape, "backward_converted: CAM gradient shape mismatch");

  // Total d(loss)/d(CAM_i): the CAM-space gradient plus the logit gradient
  // spread uniformly (logit = spatial mean + bias).
  Tensor dcam_total = dcams ? *dcams : Tensor(n, k, features.h(), features.w());
  if (dlogits) {
    const float inv_hw = 1.f / static_cast<float>(hw);
    for (int in = 0; in < n; ++in) {
      const float* dl = dlogits->row(in);
      for (int i = 0; i < k; ++i) {
        const float spread = dl[i] * inv_hw;
        if (spread == 0.f) continue;
        float* plane = dcam_total.plane(in, i);
        for (std::size_t p = 0; p < hw; ++p) plane[p] += spread;
      }
      if (head_.bias)
        for (int i = 0; i < k; ++i) gbias_[i] += dl[i];
    }
  }

  // dW[i][j] = sum_{n,x,y} dCAM_i(x,y) * F_j(x,y);  dF_j = sum_i w[i][j] dCAM_i.
  Tensor dfeat(n, c, features.h(), features.w());
  for (int in = 0; in < n; ++in) {
    for (int i = 0; i < k; ++i) {
      const float* dc = dcam_total.plane(in, i);
      float* gw = gw_.row(i);
      const float* w = head_.weights.row(i);
      for (int j = 0; j < c; ++j) {
        const float* f = features.plane(in, j);
        float* df = dfeat.plane(in, j);
        const float wj = w[j];
        float acc = 0.f;
        for (std::size_t p = 0; p < hw; ++p) {
          acc += dc[p] * f[p];
          df[p] += wj * dc[p];
        }
        gw[j] += acc;
      }
    }
  }
  backbone_.backward(dfeat);
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  backbone_.collect_params(out);
  out.push_back({"head.w", &head_.weights.v, &gw_.v});
  if (head_.bias) out.push_back({"head.b", &*head_.bias, &gbias_});
  return out;
}

std::vector<BufferRef> Model::buffers() {
  std::vector<BufferRef> out;
  backbone_.collect_buffers(out);
  return out;
}

void Model::zero_grad() {
  backbone_.zero_grad();
  gw_.v.assign(gw_.v.size(), 0.f);
  gbias_.assign(gbias_.size(), 0.f);
}

std::vector<int> argmax_rows(const Mat& logits) {
  std::vector<int> out(logits.rows);
  for (int i = 0; i < logits.rows; ++i) {
    const float* row = logits.row(i);
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace catkd::nn
