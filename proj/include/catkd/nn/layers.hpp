// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "catkd/rng.hpp"
#include "catkd/tensor.hpp"

namespace catkd::nn {

// A named view into a layer's parameter and gradient storage. The trainer
// builds its optimizer state from these in collection order, so the order
// must be deterministic (it is: construction order).
struct ParamRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
};

// Non-trainable state (batch-norm running statistics): checkpoints carry
// these, the optimizer never touches them.
struct BufferRef {
  std::string name;
  std::vector<float>* value = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;

  // `train` controls both stochastic-stat behavior (batch norm) and whether
  // activations are cached for backward. After an eval-mode forward,
  // backward() is not available.
  virtual Tensor forward(const Tensor& x, bool train) = 0;

  // Consumes d(loss)/d(output), accumulates parameter gradients, returns
  // d(loss)/d(input). Requires the preceding forward to have run with
  // train=true.
  virtual Tensor backward(const Tensor& dy) = 0;

  virtual void init(Rng& rng) { (void)rng; }
  virtual void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void zero_grad() {}
};

// 2-D convolution, square kernel, no bias (a batch norm always follows in
// the backbones here). im2col + GEMM per image.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void init(Rng& rng) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  std::vector<float>& weights() { return w_; }
  int out_channels() const { return out_ch_; }

 private:
  void im2col(const float* src, int h, int w, float* col, int oh, int ow) const;

  int in_ch_, out_ch_, k_, stride_, pad_;
  std::vector<float> w_, gw_;   // out*in*k*k
  std::vector<float> col_;      // scratch, (in*k*k) x (oh*ow)
  Tensor x_;                    // cached input (train mode)
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels, float eps = 1e-5f, float momentum = 0.1f);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
  void zero_grad() override;

  std::vector<float>& running_mean() { return rmean_; }
  std::vector<float>& running_var() { return rvar_; }
  std::vector<float>& scale() { return gamma_; }

 private:
  int ch_;
  float eps_, momentum_;
  std::vector<float> gamma_, beta_, ggamma_, gbeta_;
  std::vector<float> rmean_, rvar_;
  std::vector<float> mean_, invstd_;  // batch stats of the cached forward
  Tensor xhat_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor y_;
};

class MaxPool2d final : public Layer {
 public:
  explicit MaxPool2d(int ksize, int stride);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int k_, stride_;
  int in_h_ = 0, in_w_ = 0, in_c_ = 0;
  std::vector<int> argmax_;  // flat per output cell: index into input plane
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void init(Rng& rng) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
  void zero_grad() override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Residual basic block: conv3x3-bn-relu-conv3x3-bn plus an identity or
// projection (1x1 conv + bn) shortcut, joined by a final relu.
class BasicBlock final : public Layer {
 public:
  BasicBlock(int in_ch, int out_ch, int stride);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void init(Rng& rng) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
  void zero_grad() override;

 private:
  bool projected_;
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  ReLU relu1_;
  std::unique_ptr<Conv2d> conv_sc_;
  std::unique_ptr<BatchNorm2d> bn_sc_;
  Tensor out_;  // post-sum, post-relu activation for the final relu mask
};

}  // namespace catkd::nn
