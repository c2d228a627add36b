// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/nn/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "catkd/error.hpp"

namespace catkd::nn {

namespace {
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
}  // namespace

// ---------------------------------------------------------------- Conv2d --

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(ksize),
      stride_(stride),
      pad_(pad),
      w_(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.f),
      gw_(w_.size(), 0.f) {
  if (in_ch < 1 || out_ch < 1 || ksize < 1 || stride < 1 || pad < 0)
    fail(ErrorKind::Config, "Conv2d: bad dimensions");
}

void Conv2d::init(Rng& rng) {
  // He initialization for relu networks.
  const float std = std::sqrt(2.f / (static_cast<float>(in_ch_) * k_ * k_));
  for (auto& v : w_) v = rng.normal(0.f, std);
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "w", &w_, &gw_});
}

void Conv2d::zero_grad() { std::fill(gw_.begin(), gw_.end(), 0.f); }

void Conv2d::im2col(const float* src, int h, int w, float* col, int oh, int ow) const {
  // col is (in_ch * k * k) x (oh * ow), row-major.
  const int ohw = oh * ow;
  for (int c = 0; c < in_ch_; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* dst = col + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride_ - pad_ + ky;
          if (y < 0 || y >= h) {
            std::memset(dst + static_cast<std::size_t>(oy) * ow, 0, sizeof(float) * ow);
            continue;
          }
          const float* row = plane + static_cast<std::size_t>(y) * w;
          float* drow = dst + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride_ - pad_ + kx;
            drow[ox] = (x >= 0 && x < w) ? row[x] : 0.f;
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.c() != in_ch_)
    fail(ErrorKind::InputShape, "Conv2d: expected " + std::to_string(in_ch_) +
                                    " input channels, got " + std::to_string(x.c()));
  const int oh = conv_out_dim(x.h(), k_, stride_, pad_);
  const int ow = conv_out_dim(x.w(), k_, stride_, pad_);
  if (oh < 1 || ow < 1) fail(ErrorKind::InputShape, "Conv2d: input too small for kernel");

  Tensor y(x.n(), out_ch_, oh, ow);
  const int ckk = in_ch_ * k_ * k_;
  const int ohw = oh * ow;
  col_.resize(static_cast<std::size_t>(ckk) * ohw);

  ConstMapMat wmat(w_.data(), out_ch_, ckk);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.data() + static_cast<std::size_t>(n) * x.sample_size(), x.h(), x.w(),
           col_.data(), oh, ow);
    ConstMapMat col(col_.data(), ckk, ohw);
    MapMat out(y.data() + static_cast<std::size_t>(n) * y.sample_size(), out_ch_, ohw);
    out.noalias() = wmat * col;
  }

  if (train)
    x_ = x;
  else
    x_ = Tensor();
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  if (x_.empty()) fail(ErrorKind::Config, "Conv2d: backward without cached forward");
  const int oh = dy.h();
  const int ow = dy.w();
  const int ckk = in_ch_ * k_ * k_;
  const int ohw = oh * ow;
  col_.resize(static_cast<std::size_t>(ckk) * ohw);
  std::vector<float> dcol(static_cast<std::size_t>(ckk) * ohw);

  Tensor dx(x_.n(), x_.c(), x_.h(), x_.w());
  ConstMapMat wmat(w_.data(), out_ch_, ckk);
  MapMat gwmat(gw_.data(), out_ch_, ckk);

  for (int n = 0; n < dy.n(); ++n) {
    im2col(x_.data() + static_cast<std::size_t>(n) * x_.sample_size(), x_.h(), x_.w(),
           col_.data(), oh, ow);
    ConstMapMat col(col_.data(), ckk, ohw);
    ConstMapMat g(dy.data() + static_cast<std::size_t>(n) * dy.sample_size(), out_ch_, ohw);
    gwmat.noalias() += g * col.transpose();

    MapMat dcol_m(dcol.data(), ckk, ohw);
    dcol_m.noalias() = wmat.transpose() * g;

    // col2im: scatter-add the column gradient back onto the input grid.
    float* dst_base = dx.data() + static_cast<std::size_t>(n) * dx.sample_size();
    for (int c = 0; c < in_ch_; ++c) {
      float* plane = dst_base + static_cast<std::size_t>(c) * x_.plane_size();
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const float* srow =
              dcol.data() + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * ohw;
          for (int oy = 0; oy < oh; ++oy) {
            const int y = oy * stride_ - pad_ + ky;
            if (y < 0 || y >= x_.h()) continue;
            float* drow = plane + static_cast<std::size_t>(y) * x_.w();
            const float* s = srow + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int x = ox * stride_ - pad_ + kx;
              if (x >= 0 && x < x_.w()) drow[x] += s[ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d --

BatchNorm2d::BatchNorm2d(int channels, float eps, float momentum)
    : ch_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(channels, 1.f),
      beta_(channels, 0.f),
      ggamma_(channels, 0.f),
      gbeta_(channels, 0.f),
      rmean_(channels, 0.f),
      rvar_(channels, 1.f) {}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma_, &ggamma_});
  out.push_back({prefix + "beta", &beta_, &gbeta_});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  out.push_back({prefix + "rmean", &rmean_});
  out.push_back({prefix + "rvar", &rvar_});
}

void BatchNorm2d::zero_grad() {
  std::fill(ggamma_.begin(), ggamma_.end(), 0.f);
  std::fill(gbeta_.begin(), gbeta_.end(), 0.f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  if (x.c() != ch_) fail(ErrorKind::InputShape, "BatchNorm2d: channel mismatch");
  Tensor y(x.n(), x.c(), x.h(), x.w());
  const std::size_t plane = x.plane_size();
  const std::size_t count = static_cast<std::size_t>(x.n()) * plane;

  if (train) {
    mean_.assign(ch_, 0.f);
    invstd_.assign(ch_, 0.f);
    xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
    for (int c = 0; c < ch_; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double m = sum / static_cast<double>(count);
      const double var = sq / static_cast<double>(count) - m * m;
      mean_[c] = static_cast<float>(m);
      invstd_[c] = static_cast<float>(1.0 / std::sqrt(std::max(var, 0.0) + eps_));

      // Running stats: biased mean, unbiased variance (count/(count-1)).
      const double unbiased =
          count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      rmean_[c] = (1.f - momentum_) * rmean_[c] + momentum_ * static_cast<float>(m);
      rvar_[c] = (1.f - momentum_) * rvar_[c] + momentum_ * static_cast<float>(unbiased);

      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.plane(n, c);
        float* xh = xhat_.plane(n, c);
        float* out = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          xh[i] = (p[i] - mean_[c]) * invstd_[c];
          out[i] = gamma_[c] * xh[i] + beta_[c];
        }
      }
    }
  } else {
    xhat_ = Tensor();
    for (int c = 0; c < ch_; ++c) {
      const float inv = 1.f / std::sqrt(rvar_[c] + eps_);
      const float scale = gamma_[c] * inv;
      const float shift = beta_[c] - rmean_[c] * scale;
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.plane(n, c);
        float* out = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) out[i] = scale * p[i] + shift;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (xhat_.empty()) fail(ErrorKind::Config, "BatchNorm2d: backward without train forward");
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  const std::size_t plane = dy.plane_size();
  const double count = static_cast<double>(dy.n()) * plane;

  for (int c = 0; c < ch_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const float* g = dy.plane(n, c);
      const float* xh = xhat_.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
      }
    }
    ggamma_[c] += static_cast<float>(sum_dy_xhat);
    gbeta_[c] += static_cast<float>(sum_dy);

    const float k1 = gamma_[c] * invstd_[c];
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
    for (int n = 0; n < dy.n(); ++n) {
      const float* g = dy.plane(n, c);
      const float* xh = xhat_.plane(n, c);
      float* out = dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        out[i] = k1 * (g[i] - mean_dy - xh[i] * mean_dy_xhat);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU ----

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor y(x.n(), x.c(), x.h(), x.w());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.f ? x[i] : 0.f;
  if (train)
    y_ = y;
  else
    y_ = Tensor();
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  if (y_.empty()) fail(ErrorKind::Config, "ReLU: backward without cached forward");
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dx[i] = y_[i] > 0.f ? dy[i] : 0.f;
  return dx;
}

// ------------------------------------------------------------- MaxPool2d --

MaxPool2d::MaxPool2d(int ksize, int stride) : k_(ksize), stride_(stride) {
  if (ksize < 1 || stride < 1) fail(ErrorKind::Config, "MaxPool2d: bad dimensions");
}

Tensor MaxPool2d::forward(const Tensor& x, bool train) {
  const int oh = (x.h() - k_) / stride_ + 1;
  const int ow = (x.w() - k_) / stride_ + 1;
  if (oh < 1 || ow < 1) fail(ErrorKind::InputShape, "MaxPool2d: input too small");
  Tensor y(x.n(), x.c(), oh, ow);
  in_h_ = x.h();
  in_w_ = x.w();
  in_c_ = x.c();
  argmax_.assign(train ? y.size() : 0, -1);

  std::size_t oi = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.plane(n, c);
      float* out = y.plane(n, c);
      for (int py = 0; py < oh; ++py) {
        for (int px = 0; px < ow; ++px, ++oi) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < k_; ++ky) {
            const int yy = py * stride_ + ky;
            for (int kx = 0; kx < k_; ++kx) {
              const int xx = px * stride_ + kx;
              const float v = p[yy * x.w() + xx];
              if (v > best) {
                best = v;
                best_idx = yy * x.w() + xx;
              }
            }
          }
          out[py * ow + px] = best;
          if (train) argmax_[oi] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
  if (argmax_.empty()) fail(ErrorKind::Config, "MaxPool2d: backward without train forward");
  Tensor dx(dy.n(), in_c_, in_h_, in_w_);
  std::size_t oi = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      float* plane = dx.plane(n, c);
      const float* g = dy.plane(n, c);
      for (std::size_t i = 0; i < dy.plane_size(); ++i, ++oi) plane[argmax_[oi]] += g[i];
    }
  }
  return dx;
}

// ------------------------------------------------------------ Sequential --

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, train);
  return cur;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

void Sequential::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params(prefix + std::to_string(i) + ".", out);
}

void Sequential::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
}

void Sequential::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

// ------------------------------------------------------------ BasicBlock --

BasicBlock::BasicBlock(int in_ch, int out_ch, int stride)
    : projected_(stride != 1 || in_ch != out_ch),
      conv1_(in_ch, out_ch, 3, stride, 1),
      conv2_(out_ch, out_ch, 3, 1, 1),
      bn1_(out_ch),
      bn2_(out_ch) {
  if (projected_) {
    conv_sc_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0);
    bn_sc_ = std::make_unique<BatchNorm2d>(out_ch);
  }
}

void BasicBlock::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (conv_sc_) conv_sc_->init(rng);
  // Zero the residual branch's final scale so each block starts as the
  // identity. Keeps activations near input scale regardless of depth and
  // stabilizes the first epochs of deep stacks.
  std::fill(bn2_.scale().begin(), bn2_.scale().end(), 0.f);
}

void BasicBlock::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  conv1_.collect_params(prefix + "conv1.", out);
  bn1_.collect_params(prefix + "bn1.", out);
  conv2_.collect_params(prefix + "conv2.", out);
  bn2_.collect_params(prefix + "bn2.", out);
  if (projected_) {
    conv_sc_->collect_params(prefix + "convsc.", out);
    bn_sc_->collect_params(prefix + "bnsc.", out);
  }
}

void BasicBlock::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  bn1_.collect_buffers(prefix + "bn1.", out);
  bn2_.collect_buffers(prefix + "bn2.", out);
  if (projected_) bn_sc_->collect_buffers(prefix + "bnsc.", out);
}

void BasicBlock::zero_grad() {
  conv1_.zero_grad();
  bn1_.zero_grad();
  conv2_.zero_grad();
  bn2_.zero_grad();
  if (projected_) {
    conv_sc_->zero_grad();
    bn_sc_->zero_grad();
  }
}

Tensor BasicBlock::forward(const Tensor& x, bool train) {
  Tensor main = bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train), train), train);
  Tensor shortcut = projected_ ? bn_sc_->forward(conv_sc_->forward(x, train), train) : x;
  Tensor out(main.n(), main.c(), main.h(), main.w());
  for (std::size_t i = 0; i < main.size(); ++i) {
    const float v = main[i] + shortcut[i];
    out[i] = v > 0.f ? v : 0.f;
  }
  if (train)
    out_ = out;
  else
    out_ = Tensor();
  return out;
}

Tensor BasicBlock::backward(const Tensor& dy) {
  if (out_.empty()) fail(ErrorKind::Config, "BasicBlock: backward without train forward");
  Tensor dsum(dy.n(), dy.c(), dy.h(), dy.w());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dsum[i] = out_[i] > 0.f ? dy[i] : 0.f;

  Tensor dmain = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(dsum)))));
  Tensor dshort = projected_ ? conv_sc_->backward(bn_sc_->backward(dsum)) : dsum;

  for (std::size_t i = 0; i < dmain.size(); ++i) dmain[i] += dshort[i];
  return dmain;
}

}  // namespace catkd::nn
