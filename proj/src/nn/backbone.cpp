// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/nn/backbone.hpp"

#include <memory>
#include <utility>

#include "catkd/error.hpp"

namespace catkd::nn {

namespace {

void conv_bn_relu(Sequential& seq, int in_ch, int out_ch, int stride) {
  seq.add(std::make_unique<Conv2d>(in_ch, out_ch, 3, stride, 1));
  seq.add(std::make_unique<BatchNorm2d>(out_ch));
  seq.add(std::make_unique<ReLU>());
}

// Residual stage: `blocks` basic blocks, the first carrying the stride.
void add_stage(Sequential& seq, int& in_ch, int out_ch, int blocks, int stride) {
  for (int b = 0; b < blocks; ++b) {
    seq.add(std::make_unique<BasicBlock>(in_ch, out_ch, b == 0 ? stride : 1));
    in_ch = out_ch;
  }
}

struct BuildResult {
  int channels;
  int cam_h;
  int cam_w;
};

BuildResult build(const BackboneSpec& s, Sequential& body) {
  const int w = s.width;
  if (w < 1) fail(ErrorKind::Config, "backbone: width multiplier must be >= 1");

  if (s.family == "tiny-cnn") {
    // 3-6 conv blocks, strides 1,2,2 then stride-1 extras: 32x32 -> 8x8.
    if (s.depth < 3 || s.depth > 6)
      fail(ErrorKind::Config, "tiny-cnn: depth must be in [3,6], got " + std::to_string(s.depth));
    conv_bn_relu(body, s.in_channels, 16 * w, 1);
    conv_bn_relu(body, 16 * w, 32 * w, 2);
    conv_bn_relu(body, 32 * w, 64 * w, 2);
    for (int extra = 3; extra < s.depth; ++extra) conv_bn_relu(body, 64 * w, 64 * w, 1);
    return {64 * w, s.in_h / 4, s.in_w / 4};
  }

  if (s.family == "resnet-cifar") {
    // Classic 6n+2 layout: stem 16, stages 16/32/64, strides 1/2/2.
    if (s.depth < 8 || (s.depth - 2) % 6 != 0)
      fail(ErrorKind::Config, "resnet-cifar: depth must be 6n+2 (20, 32, 56, ...), got " +
                                  std::to_string(s.depth));
    const int n = (s.depth - 2) / 6;
    conv_bn_relu(body, s.in_channels, 16 * w, 1);
    int ch = 16 * w;
    add_stage(body, ch, 16 * w, n, 1);
    add_stage(body, ch, 32 * w, n, 2);
    add_stage(body, ch, 64 * w, n, 2);
    return {ch, s.in_h / 4, s.in_w / 4};
  }

  if (s.family == "resnet8x4-style") {
    // Shallow residual net with widened stages (base 8/16/32/64 times width,
    // width defaulting to 4 in presets).
    if (s.depth != 8) fail(ErrorKind::Config, "resnet8x4-style: depth is fixed at 8");
    conv_bn_relu(body, s.in_channels, 8 * w, 1);
    int ch = 8 * w;
    add_stage(body, ch, 16 * w, 1, 1);
    add_stage(body, ch, 32 * w, 1, 2);
    add_stage(body, ch, 64 * w, 1, 2);
    return {ch, s.in_h / 4, s.in_w / 4};
  }

  if (s.family == "wrn-style") {
    // 6n+4 layout with widened residual stages (post-activation blocks).
    if (s.depth < 10 || (s.depth - 4) % 6 != 0)
      fail(ErrorKind::Config, "wrn-style: depth must be 6n+4 (16, 28, 40, ...), got " +
                                  std::to_string(s.depth));
    const int n = (s.depth - 4) / 6;
    conv_bn_relu(body, s.in_channels, 16, 1);
    int ch = 16;
    add_stage(body, ch, 16 * w, n, 1);
    add_stage(body, ch, 32 * w, n, 2);
    add_stage(body, ch, 64 * w, n, 2);
    return {ch, s.in_h / 4, s.in_w / 4};
  }

  if (s.family == "vgg-style") {
    // Plain conv stages with 2x2 max pooling between them; three pools take
    // 32x32 inputs down to 4x4 final maps.
    int per_stage[4];
    if (s.depth == 8) {
      per_stage[0] = 1; per_stage[1] = 1; per_stage[2] = 2; per_stage[3] = 2;
    } else if (s.depth == 13) {
      per_stage[0] = 2; per_stage[1] = 2; per_stage[2] = 3; per_stage[3] = 3;
    } else {
      fail(ErrorKind::Config, "vgg-style: depth must be 8 or 13, got " + std::to_string(s.depth));
    }
    const int widths[4] = {64 * w, 128 * w, 256 * w, 512 * w};
    int ch = s.in_channels;
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < per_stage[stage]; ++b) {
        conv_bn_relu(body, ch, widths[stage], 1);
        ch = widths[stage];
      }
      if (stage < 3) body.add(std::make_unique<MaxPool2d>(2, 2));
    }
    return {ch, s.in_h / 8, s.in_w / 8};
  }

  fail(ErrorKind::Config, "backbone: unknown family '" + s.family + "'");
}

}  // namespace

Backbone::Backbone(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
  if (spec_.in_channels < 1 || spec_.in_h < 8 || spec_.in_w < 8)
    fail(ErrorKind::Config, "backbone: input shape too small");

  const BuildResult r = build(spec_, body_);
  feature_channels_ = r.channels;
  if (spec_.cam_w == 0) spec_.cam_w = r.cam_w;
  if (spec_.cam_h == 0) spec_.cam_h = r.cam_h;

  body_.init(rng);

  // Dry run: the declared CAM resolution is a promise other modules rely on.
  Tensor probe(1, spec_.in_channels, spec_.in_h, spec_.in_w);
  Tensor out = body_.forward(probe, /*train=*/false);
  if (out.h() != spec_.cam_h || out.w() != spec_.cam_w || out.c() != feature_channels_)
    fail(ErrorKind::Config,
         "backbone " + spec_.id() + ": declared CAM resolution " + std::to_string(spec_.cam_w) +
             "x" + std::to_string(spec_.cam_h) + " but dry run produced " +
             std::to_string(out.w()) + "x" + std::to_string(out.h()));
}

std::vector<BackboneSpec> backbone_zoo() {
  auto make = [](const char* family, int depth, int width) {
    BackboneSpec s;
    s.family = family;
    s.depth = depth;
    s.width = width;
    return s;
  };
  return {make("tiny-cnn", 3, 1),      make("tiny-cnn", 5, 2),
          make("resnet-cifar", 20, 1), make("resnet8x4-style", 8, 4),
          make("wrn-style", 16, 2),    make("vgg-style", 8, 1)};
}

Tensor Backbone::forward_features(const Tensor& batch, bool train) {
  if (batch.c() != spec_.in_channels || batch.h() != spec_.in_h || batch.w() != spec_.in_w)
    fail(ErrorKind::InputShape,
         "forward_features: expected " + std::to_string(spec_.in_channels) + "x" +
             std::to_string(spec_.in_h) + "x" + std::to_string(spec_.in_w) + " input, got " +
             std::to_string(batch.c()) + "x" + std::to_string(batch.h()) + "x" +
             std::to_string(batch.w()));
  if (!batch.all_finite()) fail(ErrorKind::InputShape, "forward_features: non-finite input");
  return body_.forward(batch, train);
}

}  // namespace catkd::nn
