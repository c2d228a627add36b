// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "catkd/cam/transforms.hpp"
#include "catkd/error.hpp"
#include "catkd/losses/losses.hpp"
#include "catkd/nn/backbone.hpp"
#include "catkd/nn/layers.hpp"
#include "catkd/nn/model.hpp"
#include "catkd/rng.hpp"

using catkd::Error;
using catkd::Mat;
using catkd::Rng;
using catkd::Tensor;
using catkd::nn::Backbone;
using catkd::nn::BackboneSpec;
using catkd::nn::BatchNorm2d;
using catkd::nn::Conv2d;
using catkd::nn::MaxPool2d;
using catkd::nn::Model;
using catkd::nn::ParamRef;
using catkd::nn::ReLU;

namespace {

Tensor random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Reference convolution in wide floats, OIHW weights, zero padding.
std::vector<double> naive_conv(const std::vector<double>& x, int n, int c, int h, int w,
                               const std::vector<double>& wt, int oc, int k, int stride,
                               int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n) * oc * oh * ow, 0.0);
  for (int in = 0; in < n; ++in)
    for (int o = 0; o < oc; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix] *
                       wt[((static_cast<std::size_t>(o) * c + ic) * k + ky) * k + kx];
              }
          y[((static_cast<std::size_t>(in) * oc + o) * oh + oy) * ow + ox] = acc;
        }
  return y;
}

std::vector<double> widen(const Tensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i];
  return out;
}

std::vector<double> widen(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

// ------------------------------------------------------------- conv -------

TEST_CASE("convolution matches a direct-arithmetic reference") {
  Rng rng(401);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
    Conv2d conv(2, 3, 3, stride, pad);
    conv.init(rng);
    const Tensor x = random_tensor(rng, 2, 2, 5, 5);

    int oh = 0, ow = 0;
    const auto want =
        naive_conv(widen(x), 2, 2, 5, 5, widen(conv.weights()), 3, 3, stride, pad, oh, ow);
    Tensor got = conv.forward(x, false);

    REQUIRE(got.h() == oh);
    REQUIRE(got.w() == ow);
    REQUIRE(got.c() == 3);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("convolution gradients match finite differences of the reference") {
  Rng rng(402);
  const int stride = 1, pad = 1, k = 3, c = 2, oc = 2, h = 4, w = 4;
  Conv2d conv(c, oc, k, stride, pad);
  conv.init(rng);
  const Tensor x = random_tensor(rng, 1, c, h, w);
  Tensor upstream = random_tensor(rng, 1, oc, h, w);

  conv.forward(x, true);
  conv.zero_grad();
  const Tensor dx = conv.backward(upstream);

  std::vector<ParamRef> params;
  conv.collect_params("", params);
  REQUIRE(params.size() == 1);

  // loss(x, w) = sum(conv(x, w) * upstream), differentiated numerically in
  // wide floats against the reference implementation.
  auto loss_of = [&](const std::vector<double>& xs, const std::vector<double>& ws) {
    int oh = 0, ow = 0;
    const auto y = naive_conv(xs, 1, c, h, w, ws, oc, k, stride, pad, oh, ow);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += y[i] * upstream[i];
    return total;
  };

  const double step = 1e-6;
  const auto xs = widen(x);
  const auto ws = widen(conv.weights());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto plus = xs, minus = xs;
    plus[i] += step;
    minus[i] -= step;
    const double fd = (loss_of(plus, ws) - loss_of(minus, ws)) / (2 * step);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-3));
  }
  for (std::size_t i = 0; i < ws.size(); ++i) {
    auto plus = ws, minus = ws;
    plus[i] += step;
    minus[i] -= step;
    const double fd = (loss_of(xs, plus) - loss_of(xs, minus)) / (2 * step);
    CHECK((*params[0].grad)[i] == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("convolution gradients accumulate across backward calls") {
  Rng rng(403);
  Conv2d conv(1, 1, 3, 1, 1);
  conv.init(rng);
  const Tensor x = random_tensor(rng, 1, 1, 4, 4);
  Tensor up = random_tensor(rng, 1, 1, 4, 4);

  conv.forward(x, true);
  conv.zero_grad();
  conv.backward(up);
  std::vector<ParamRef> params;
  conv.collect_params("", params);
  const std::vector<float> once = *params[0].grad;
  conv.backward(up);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK((*params[0].grad)[i] == doctest::Approx(2.f * once[i]).epsilon(1e-6));
}

TEST_CASE("convolution backward without a cached training forward faults") {
  Rng rng(404);
  Conv2d conv(1, 2, 3, 1, 1);
  conv.init(rng);
  const Tensor x = random_tensor(rng, 1, 1, 4, 4);
  conv.forward(x, false);  // eval mode: no cache
  Tensor up(1, 2, 4, 4);
  CHECK_THROWS_WITH_AS(conv.backward(up), doctest::Contains("config"), Error);
}

// -------------------------------------------------------- batch norm ------

TEST_CASE("batch norm standardizes per channel and tracks running stats") {
  Rng rng(405);
  BatchNorm2d bn(2);
  const Tensor x = random_tensor(rng, 4, 2, 3, 3, -2.0, 5.0);
  const Tensor y = bn.forward(x, true);

  const std::size_t count = 4 * 9;
  for (int ch = 0; ch < 2; ++ch) {
    double mean = 0.0, var = 0.0, ymean = 0.0, yvar = 0.0;
    for (int in = 0; in < 4; ++in) {
      const float* px = x.plane(in, ch);
      const float* py = y.plane(in, ch);
      for (int p = 0; p < 9; ++p) {
        mean += px[p];
        ymean += py[p];
      }
    }
    mean /= count;
    ymean /= count;
    for (int in = 0; in < 4; ++in) {
      const float* px = x.plane(in, ch);
      const float* py = y.plane(in, ch);
      for (int p = 0; p < 9; ++p) {
        var += (px[p] - mean) * (px[p] - mean);
        yvar += (py[p] - ymean) * (py[p] - ymean);
      }
    }
    var /= count;   // biased, as used for the normalization itself
    yvar /= count;

    CHECK(ymean == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(yvar == doctest::Approx(1.0).epsilon(1e-3));

    // One update from (0, 1) with momentum 0.1; running var is unbiased.
    const double unbiased = var * count / (count - 1.0);
    CHECK(bn.running_mean()[ch] == doctest::Approx(0.1 * mean).epsilon(1e-4));
    CHECK(bn.running_var()[ch] == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-4));
  }
}

TEST_CASE("batch norm eval mode uses running statistics") {
  Rng rng(406);
  BatchNorm2d bn(1);
  bn.running_mean()[0] = 2.f;
  bn.running_var()[0] = 4.f;
  Tensor x(1, 1, 1, 2);
  x[0] = 2.f;
  x[1] = 6.f;
  const Tensor y = bn.forward(x, false);
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-4));  // (6-2)/sqrt(4+eps)
}

TEST_CASE("batch norm gradients match finite differences of the formula") {
  Rng rng(407);
  const int n = 3, ch = 2, h = 2, w = 2;
  BatchNorm2d bn(ch);
  const Tensor x = random_tensor(rng, n, ch, h, w, -2.0, 2.0);
  Tensor upstream = random_tensor(rng, n, ch, h, w);

  bn.forward(x, true);
  bn.zero_grad();
  const Tensor dx = bn.backward(upstream);
  std::vector<ParamRef> params;
  bn.collect_params("", params);
  REQUIRE(params.size() == 2);  // gamma, beta

  // Reference: y = gamma * (x - mean) / sqrt(var_biased + eps) + beta.
  auto loss_of = [&](const std::vector<double>& xs, const std::vector<double>& gamma,
                     const std::vector<double>& beta) {
    const double eps = 1e-5;
    const int plane = h * w;
    const double count = n * plane;
    double total = 0.0;
    for (int c = 0; c < ch; ++c) {
      double mean = 0.0, var = 0.0;
      for (int in = 0; in < n; ++in)
        for (int p = 0; p < plane; ++p) mean += xs[(in * ch + c) * plane + p];
      mean /= count;
      for (int in = 0; in < n; ++in)
        for (int p = 0; p < plane; ++p) {
          const double d = xs[(in * ch + c) * plane + p] - mean;
          var += d * d;
        }
      var /= count;
      const double invstd = 1.0 / std::sqrt(var + eps);
      for (int in = 0; in < n; ++in)
        for (int p = 0; p < plane; ++p) {
          const std::size_t i = (in * ch + c) * plane + p;
          total += (gamma[c] * (xs[i] - mean) * invstd + beta[c]) * upstream[i];
        }
    }
    return total;
  };

  const auto xs = widen(x);
  const std::vector<double> gamma = widen(*params[0].value);
  const std::vector<double> beta = widen(*params[1].value);
  const double step = 1e-6;

  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto plus = xs, minus = xs;
    plus[i] += step;
    minus[i] -= step;
    const double fd = (loss_of(plus, gamma, beta) - loss_of(minus, gamma, beta)) / (2 * step);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(2e-3));
  }
  for (int c = 0; c < ch; ++c) {
    auto gp = gamma, gm = gamma;
    gp[c] += step;
    gm[c] -= step;
    const double fd = (loss_of(xs, gp, beta) - loss_of(xs, gm, beta)) / (2 * step);
    CHECK((*params[0].grad)[c] == doctest::Approx(fd).epsilon(1e-3));

    auto bp = beta, bm = beta;
    bp[c] += step;
    bm[c] -= step;
    const double fdb = (loss_of(xs, gamma, bp) - loss_of(xs, gamma, bm)) / (2 * step);
    CHECK((*params[1].grad)[c] == doctest::Approx(fdb).epsilon(1e-3));
  }
}

// --------------------------------------------------- relu and max pool ----

TEST_CASE("relu clamps forward and masks backward") {
  ReLU relu;
  Tensor x(1, 1, 1, 4);
  x[0] = -2.f; x[1] = 0.f; x[2] = 3.f; x[3] = -0.5f;
  const Tensor y = relu.forward(x, true);
  CHECK(y[0] == 0.f);
  CHECK(y[1] == 0.f);
  CHECK(y[2] == 3.f);
  CHECK(y[3] == 0.f);

  Tensor up(1, 1, 1, 4);
  up[0] = 1.f; up[1] = 1.f; up[2] = 1.f; up[3] = 1.f;
  const Tensor dx = relu.backward(up);
  CHECK(dx[0] == 0.f);
  CHECK(dx[1] == 0.f);
  CHECK(dx[2] == 1.f);
  CHECK(dx[3] == 0.f);
}

TEST_CASE("max pool forwards maxima and routes gradient to them") {
  MaxPool2d pool(2, 2);
  Tensor x(1, 1, 4, 4);
  // Each 2x2 window has a unique maximum at a known position.
  const float vals[16] = {1, 2, 9, 3,
                          4, 3, 2, 1,
                          0, 7, 1, 2,
                          5, 6, 3, 8};
  for (int i = 0; i < 16; ++i) x[i] = vals[i];

  const Tensor y = pool.forward(x, true);
  REQUIRE(y.h() == 2);
  REQUIRE(y.w() == 2);
  CHECK(y[0] == 4.f);
  CHECK(y[1] == 9.f);
  CHECK(y[2] == 7.f);
  CHECK(y[3] == 8.f);

  Tensor up(1, 1, 2, 2);
  up[0] = 10.f; up[1] = 20.f; up[2] = 30.f; up[3] = 40.f;
  const Tensor dx = pool.backward(up);
  CHECK(dx[4] == 10.f);   // the 4 at (1,0)
  CHECK(dx[2] == 20.f);   // the 9 at (0,2)
  CHECK(dx[9] == 30.f);   // the 7 at (2,1)
  CHECK(dx[15] == 40.f);  // the 8 at (3,3)
  float total = 0.f;
  for (std::size_t i = 0; i < dx.size(); ++i) total += dx[i];
  CHECK(total == 100.f);
}

// ------------------------------------------------------------ backbones ---

TEST_CASE("each backbone family produces its declared feature geometry") {
  Rng rng(408);
  struct Case {
    BackboneSpec spec;
    int channels, fh, fw;
  };
  std::vector<Case> cases;
  cases.push_back({{.family = "tiny-cnn", .depth = 3, .width = 1}, 64, 8, 8});
  cases.push_back({{.family = "tiny-cnn", .depth = 5, .width = 2}, 128, 8, 8});
  cases.push_back({{.family = "resnet-cifar", .depth = 20, .width = 1}, 64, 8, 8});
  cases.push_back({{.family = "resnet8x4-style", .depth = 8, .width = 4}, 256, 8, 8});
  cases.push_back({{.family = "wrn-style", .depth = 16, .width = 2}, 128, 8, 8});
  cases.push_back({{.family = "vgg-style", .depth = 8, .width = 1}, 512, 4, 4});

  for (const auto& c : cases) {
    CAPTURE(c.spec.id());
    Backbone bb(c.spec, rng);
    CHECK(bb.feature_channels() == c.channels);
    const Tensor x = random_tensor(rng, 2, 3, 32, 32);
    const Tensor f = bb.forward_features(x, false);
    CHECK(f.n() == 2);
    CHECK(f.c() == c.channels);
    CHECK(f.h() == c.fh);
    CHECK(f.w() == c.fw);
    CHECK(f.all_finite());
  }
}

TEST_CASE("invalid backbone knobs are config errors") {
  Rng rng(409);
  auto expect_config = [&](BackboneSpec spec) {
    CHECK_THROWS_WITH_AS(Backbone(spec, rng), doctest::Contains("config"), Error);
  };
  expect_config({.family = "resnet-cifar", .depth = 21});
  expect_config({.family = "wrn-style", .depth = 12});
  expect_config({.family = "vgg-style", .depth = 11});
  expect_config({.family = "tiny-cnn", .depth = 7});
  expect_config({.family = "no-such-family"});
  expect_config({.family = "tiny-cnn", .width = 0});
  // Declared resolution contradicts the dry run.
  expect_config({.family = "tiny-cnn", .depth = 3, .width = 1, .cam_w = 7, .cam_h = 7});
}

TEST_CASE("feature extraction validates its input") {
  Rng rng(410);
  Backbone bb({.family = "tiny-cnn", .depth = 3, .in_h = 16, .in_w = 16}, rng);
  CHECK_THROWS_WITH_AS(bb.forward_features(Tensor(1, 3, 32, 32), false),
                       doctest::Contains("input-shape"), Error);
  CHECK_THROWS_AS(bb.forward_features(Tensor(1, 1, 16, 16), false), Error);
  Tensor bad(1, 3, 16, 16);
  bad[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(bb.forward_features(bad, false), Error);
}

TEST_CASE("evaluation forwards are bitwise deterministic") {
  Rng rng(411);
  Backbone bb({.family = "resnet-cifar", .depth = 20, .in_h = 16, .in_w = 16}, rng);
  const Tensor x = random_tensor(rng, 2, 3, 16, 16);
  const Tensor a = bb.forward_features(x, false);
  const Tensor b = bb.forward_features(x, false);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

// ------------------------------------------------------------- model ------

TEST_CASE("dense and converted classifier paths agree") {
  Rng rng(412);
  for (const char* family : {"tiny-cnn", "vgg-style"}) {
    BackboneSpec spec;
    spec.family = family;
    spec.depth = family == std::string("vgg-style") ? 8 : 4;
    spec.in_h = spec.in_w = 16;
    Model m(spec, 10, /*head_bias=*/true, rng);

    const Tensor x = random_tensor(rng, 3, 3, 16, 16);
    const Tensor f = m.forward_features(x, false);
    const Mat dense = m.logits_dense_path(f);
    const Mat conv = m.logits_converted_path(m.cams(f));
    REQUIRE(dense.rows == conv.rows);
    REQUIRE(dense.cols == conv.cols);
    for (std::size_t i = 0; i < dense.v.size(); ++i)
      CHECK(dense.v[i] == doctest::Approx(conv.v[i]).epsilon(1e-5));
  }
}

TEST_CASE("dense and converted head gradients agree") {
  Rng rng(413);
  BackboneSpec spec;
  spec.family = "tiny-cnn";
  spec.in_h = spec.in_w = 16;
  Model m(spec, 5, true, rng);

  const Tensor x = random_tensor(rng, 2, 3, 16, 16);
  Mat upstream(2, 5);
  for (auto& v : upstream.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const Tensor f1 = m.forward_features(x, true);
  m.zero_grad();
  m.backward_dense(f1, upstream);
  std::vector<float> gw_dense, gb_dense;
  for (auto& p : m.params()) {
    if (p.name == "head.w") gw_dense = *p.grad;
    if (p.name == "head.b") gb_dense = *p.grad;
  }

  const Tensor f2 = m.forward_features(x, true);
  m.zero_grad();
  m.backward_converted(f2, &upstream, nullptr);
  for (auto& p : m.params()) {
    if (p.name == "head.w") {
      REQUIRE(p.grad->size() == gw_dense.size());
      for (std::size_t i = 0; i < gw_dense.size(); ++i)
        CHECK((*p.grad)[i] == doctest::Approx(gw_dense[i]).epsilon(1e-4));
    }
    if (p.name == "head.b") {
      for (std::size_t i = 0; i < gb_dense.size(); ++i)
        CHECK((*p.grad)[i] == doctest::Approx(gb_dense[i]).epsilon(1e-4));
    }
  }
}

namespace {

// Directional derivative check over all parameters: perturbs every parameter
// along a fixed random direction and compares the finite-difference slope of
// `loss` against the dot product of the analytic gradient with the direction.
template <typename LossFn, typename BackwardFn>
void check_parameter_direction(Model& m, Rng& rng, LossFn loss, BackwardFn backward,
                               double tolerance) {
  auto params = m.params();

  m.zero_grad();
  backward();
  std::vector<std::vector<float>> direction;
  double analytic = 0.0;
  for (auto& p : params) {
    auto& d = direction.emplace_back(p.value->size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = static_cast<float>(rng.normal());
      analytic += static_cast<double>((*p.grad)[i]) * d[i];
    }
  }

  const float step = 1e-3f;
  auto nudge = [&](float scale) {
    for (std::size_t pi = 0; pi < params.size(); ++pi)
      for (std::size_t i = 0; i < direction[pi].size(); ++i)
        (*params[pi].value)[i] += scale * step * direction[pi][i];
  };
  nudge(+1.f);
  const double plus = loss();
  nudge(-2.f);
  const double minus = loss();
  nudge(+1.f);

  const double fd = (plus - minus) / (2.0 * step);
  CHECK(std::abs(analytic - fd) <= tolerance * std::max(1.0, std::abs(fd)));
}

}  // namespace

TEST_CASE("the classification training gradient is a descent direction") {
  Rng rng(414);
  BackboneSpec spec;
  spec.family = "tiny-cnn";
  spec.in_h = spec.in_w = 16;
  Model m(spec, 4, true, rng);
  const Tensor x = random_tensor(rng, 2, 3, 16, 16);
  const std::vector<int> labels{1, 3};

  auto loss = [&] {
    const Tensor f = m.forward_features(x, true);
    return static_cast<double>(catkd::losses::ce_loss(m.logits_dense_path(f), labels));
  };
  auto backward = [&] {
    const Tensor f = m.forward_features(x, true);
    Mat grad;
    catkd::losses::ce_loss(m.logits_dense_path(f), labels, &grad);
    m.backward_dense(f, grad);
  };
  check_parameter_direction(m, rng, loss, backward, 0.05);
}

TEST_CASE("the transfer training gradient flows through pooling to all weights") {
  Rng rng(415);
  BackboneSpec spec;
  spec.family = "tiny-cnn";
  spec.in_h = spec.in_w = 16;  // features 4x4, pooled to 2x2
  Model m(spec, 4, false, rng);
  const Tensor x = random_tensor(rng, 2, 3, 16, 16);

  // Fixed teacher maps of the pooled shape.
  catkd::cam::CamStack teacher;
  teacher.maps = random_tensor(rng, 2, 4, 2, 2);
  teacher.pooled = {{2, 2}};

  auto student_pooled = [&](const Tensor& f) {
    return catkd::cam::pool_cams(m.cams(f), 2, 2);
  };
  auto loss = [&] {
    const Tensor f = m.forward_features(x, true);
    return static_cast<double>(
        catkd::losses::cat_loss(teacher, student_pooled(f), catkd::cam::NormOrder::l2));
  };
  auto backward = [&] {
    const Tensor f = m.forward_features(x, true);
    Tensor grad_pooled;
    catkd::losses::cat_loss(teacher, student_pooled(f), catkd::cam::NormOrder::l2, 1e-12,
                            nullptr, &grad_pooled);
    const Tensor grad_raw = catkd::cam::pool_cams_backward(grad_pooled, f.h(), f.w());
    m.backward_converted(f, nullptr, &grad_raw);
  };
  check_parameter_direction(m, rng, loss, backward, 0.05);
}

TEST_CASE("argmax breaks ties toward the lower index") {
  Mat logits(2, 3);
  logits(0, 0) = 1.f; logits(0, 1) = 5.f; logits(0, 2) = 5.f;
  logits(1, 0) = 2.f; logits(1, 1) = 2.f; logits(1, 2) = 2.f;
  const auto pred = catkd::nn::argmax_rows(logits);
  CHECK(pred[0] == 1);
  CHECK(pred[1] == 0);
}
