// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "catkd/cam/stack.hpp"
#include "catkd/error.hpp"
#include "catkd/nn/head.hpp"
#include "catkd/rng.hpp"

using catkd::Error;
using catkd::ErrorKind;
using catkd::Mat;
using catkd::MatD;
using catkd::Rng;
using catkd::Tensor;
using catkd::TensorD;
using catkd::cam::CamStack;
using catkd::cam::CamStackD;
using catkd::nn::HeadParams;
using catkd::nn::HeadParamsD;

namespace {

template <typename T>
catkd::TensorT<T> random_features(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
  catkd::TensorT<T> t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

template <typename T>
catkd::nn::HeadParamsT<T> random_head(Rng& rng, int k, int c, bool bias) {
  catkd::nn::HeadParamsT<T> head;
  head.weights = catkd::MatT<T>(k, c);
  for (auto& v : head.weights.v) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  if (bias) {
    head.bias.emplace(k);
    for (auto& v : *head.bias) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  }
  return head;
}

// Independent scalar-loop logit oracle: L_i = (1/(W*H)) sum_xy sum_j w_ij F_j + b_i.
template <typename T>
std::vector<T> logit_oracle(const catkd::TensorT<T>& f, const catkd::nn::HeadParamsT<T>& head,
                            int sample) {
  std::vector<T> out(head.num_categories(), T(0));
  for (int i = 0; i < head.num_categories(); ++i) {
    T acc = T(0);
    for (int j = 0; j < f.c(); ++j) {
      T mean = T(0);
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x) mean += f.at(sample, j, y, x);
      mean /= static_cast<T>(f.h() * f.w());
      acc += head.weights(i, j) * mean;
    }
    if (head.bias) acc += (*head.bias)[i];
    out[i] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("gap of a single 2x2 channel is its arithmetic mean") {
  Tensor f(1, 1, 2, 2);
  f.at(0, 0, 0, 0) = 1.f;
  f.at(0, 0, 0, 1) = 3.f;
  f.at(0, 0, 1, 0) = 5.f;
  f.at(0, 0, 1, 1) = 7.f;
  const Mat g = catkd::nn::gap(f);
  CHECK(g(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("gap of all zeros is zero") {
  Tensor f(2, 3, 4, 4);
  const Mat g = catkd::nn::gap(f);
  for (std::size_t i = 0; i < g.v.size(); ++i) CHECK(g.v[i] == 0.f);
}

TEST_CASE("gap matches the brute-force summation oracle in wide floats") {
  Rng rng(101);
  const TensorD f = random_features<double>(rng, 2, 3, 5, 5);
  const MatD g = catkd::nn::gap(f);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) sum += f.at(n, c, y, x);
      CHECK(g(n, c) == doctest::Approx(sum / 25.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("gap is linear") {
  Rng rng(102);
  const Tensor f = random_features<float>(rng, 1, 4, 8, 8);
  const Tensor g = random_features<float>(rng, 1, 4, 8, 8);
  Tensor combo(1, 4, 8, 8);
  const float a = 2.5f, b = -1.25f;
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * f[i] + b * g[i];
  const Mat gf = catkd::nn::gap(f);
  const Mat gg = catkd::nn::gap(g);
  const Mat gc = catkd::nn::gap(combo);
  for (int c = 0; c < 4; ++c)
    CHECK(gc(0, c) == doctest::Approx(a * gf(0, c) + b * gg(0, c)).epsilon(1e-5));
}

TEST_CASE("dense logits with zero weights reduce to the bias") {
  HeadParams head;
  head.weights = Mat(2, 3);
  head.bias = std::vector<float>{0.5f, -0.5f};
  Rng rng(103);
  const Tensor f = random_features<float>(rng, 2, 3, 4, 4);
  const Mat logits = catkd::nn::logits_dense(f, head);
  for (int n = 0; n < 2; ++n) {
    CHECK(logits(n, 0) == doctest::Approx(0.5));
    CHECK(logits(n, 1) == doctest::Approx(-0.5));
  }
}

TEST_CASE("dense logits match the double-loop oracle in wide floats") {
  Rng rng(104);
  const TensorD f = random_features<double>(rng, 3, 6, 4, 4);
  const HeadParamsD head = random_head<double>(rng, 5, 6, true);
  const MatD logits = catkd::nn::logits_dense(f, head);
  for (int n = 0; n < 3; ++n) {
    const auto oracle = logit_oracle(f, head, n);
    for (int i = 0; i < 5; ++i)
      CHECK(logits(n, i) == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("dense logits reject channel mismatch") {
  Rng rng(105);
  const Tensor f = random_features<float>(rng, 1, 4, 2, 2);
  const HeadParams head = random_head<float>(rng, 3, 5, false);
  CHECK_THROWS_WITH_AS(catkd::nn::logits_dense(f, head), doctest::Contains("head-shape"),
                       Error);
}

TEST_CASE("maps scale linearly with a scalar weight") {
  Tensor f(1, 1, 2, 2);
  f.at(0, 0, 0, 0) = 1.f;
  f.at(0, 0, 0, 1) = 2.f;
  f.at(0, 0, 1, 0) = 3.f;
  f.at(0, 0, 1, 1) = 4.f;
  HeadParams head;
  head.weights = Mat(2, 1);
  head.weights(0, 0) = 2.f;
  head.weights(1, 0) = 0.f;
  const CamStack cams = catkd::cam::compute_cams(f, head);
  CHECK(cams.maps.at(0, 0, 0, 0) == doctest::Approx(2.f));
  CHECK(cams.maps.at(0, 0, 0, 1) == doctest::Approx(4.f));
  CHECK(cams.maps.at(0, 0, 1, 0) == doctest::Approx(6.f));
  CHECK(cams.maps.at(0, 0, 1, 1) == doctest::Approx(8.f));
  // A zero weight row produces an all-zero category map.
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK(cams.maps.at(0, 1, y, x) == 0.f);
  CHECK(cams.raw());
}

TEST_CASE("averaging a map plus bias reproduces the dense logit") {
  Rng rng(106);
  const Tensor f = random_features<float>(rng, 4, 8, 6, 6);
  const HeadParams head = random_head<float>(rng, 7, 8, true);
  const CamStack cams = catkd::cam::compute_cams(f, head);
  const Mat dense = catkd::nn::logits_dense(f, head);
  const Mat via_maps = catkd::cam::logits_from_cams(cams, head.bias);
  REQUIRE(via_maps.rows == dense.rows);
  for (int n = 0; n < dense.rows; ++n)
    for (int i = 0; i < dense.cols; ++i)
      CHECK(via_maps(n, i) == doctest::Approx(dense(n, i)).epsilon(1e-5));
}

TEST_CASE("conversion preserves logits over random heads, both precisions") {
  Rng rng(107);
  float worst32 = 0.f;
  double worst64 = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const bool bias = trial % 2 == 0;
    const int c = 3 + trial % 5;
    const int k = 2 + trial % 4;
    const Tensor f = random_features<float>(rng, 2, c, 4, 4);
    const HeadParams head = random_head<float>(rng, k, c, bias);

    const Mat dense = catkd::nn::logits_dense(f, head);
    const HeadParams conv = catkd::cam::convert_head(head);
    const Mat converted =
        catkd::cam::logits_from_cams(catkd::cam::compute_cams(f, conv), conv.bias);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < k; ++i)
        worst32 = std::max(worst32, std::abs(dense(n, i) - converted(n, i)));

    const TensorD fd = f.cast<double>();
    const HeadParamsD headd = head.cast<double>();
    const MatD densed = catkd::nn::logits_dense(fd, headd);
    const MatD convertedd = catkd::cam::logits_from_cams(
        catkd::cam::compute_cams(fd, catkd::cam::convert_head(headd)), headd.bias);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < k; ++i)
        worst64 = std::max(worst64, std::abs(densed(n, i) - convertedd(n, i)));
  }
  CHECK(worst32 <= 1e-5f);
  CHECK(worst64 <= 1e-10);
}

TEST_CASE("conversion with zero weights yields bias-only logits") {
  HeadParams head;
  head.weights = Mat(3, 2);
  Rng rng(108);
  const Tensor f = random_features<float>(rng, 1, 2, 4, 4);
  const Mat logits = catkd::cam::logits_from_cams(
      catkd::cam::compute_cams(f, catkd::cam::convert_head(head)), head.bias);
  for (int i = 0; i < 3; ++i) CHECK(logits(0, i) == 0.f);
}

TEST_CASE("converted logits cancel opposing weights on equal channel means") {
  // K=1, C=2, w = [1, -1], both channels constant 3 -> logit 0.
  Tensor f(1, 2, 2, 2);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) f.at(0, c, y, x) = 3.f;
  HeadParams head;
  head.weights = Mat(2, 2);  // validate() wants K >= 2; row 1 unused
  head.weights(0, 0) = 1.f;
  head.weights(0, 1) = -1.f;
  const Mat logits = catkd::cam::logits_from_cams(
      catkd::cam::compute_cams(f, catkd::cam::convert_head(head)), head.bias);
  CHECK(logits(0, 0) == doctest::Approx(0.f));
}

TEST_CASE("constant maps average to their constant") {
  CamStack cams;
  cams.maps = Tensor(1, 2, 3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      cams.maps.at(0, 0, y, x) = 2.5f;
      cams.maps.at(0, 1, y, x) = -1.f;
    }
  const Mat logits = catkd::cam::logits_from_cams(cams);
  CHECK(logits(0, 0) == doctest::Approx(2.5f));
  CHECK(logits(0, 1) == doctest::Approx(-1.f));
}

TEST_CASE("zero maps plus bias give bias logits") {
  CamStack cams;
  cams.maps = Tensor(2, 2, 4, 4);
  const std::optional<std::vector<float>> bias{{0.25f, -0.75f}};
  const Mat logits = catkd::cam::logits_from_cams(cams, bias);
  for (int n = 0; n < 2; ++n) {
    CHECK(logits(n, 0) == doctest::Approx(0.25f));
    CHECK(logits(n, 1) == doctest::Approx(-0.75f));
  }
}

TEST_CASE("logit reconstruction refuses transformed stacks") {
  CamStack cams;
  cams.maps = Tensor(1, 2, 2, 2);

  CamStack pooled = cams;
  pooled.pooled = {2, 2};
  CHECK_THROWS_WITH_AS(catkd::cam::logits_from_cams(pooled),
                       doctest::Contains("invalid-provenance"), Error);

  CamStack normalized = cams;
  normalized.normalized = catkd::cam::NormOrder::l2;
  CHECK_THROWS_AS(catkd::cam::logits_from_cams(normalized), Error);

  CamStack binarized = cams;
  binarized.binarized = true;
  CHECK_THROWS_AS(catkd::cam::logits_from_cams(binarized), Error);
}

TEST_CASE("map extraction matches the mean-per-slice oracle in wide floats") {
  Rng rng(109);
  const TensorD f = random_features<double>(rng, 2, 4, 3, 3);
  const HeadParamsD head = random_head<double>(rng, 3, 4, true);
  const CamStackD cams = catkd::cam::compute_cams(f, head);
  const MatD logits = catkd::cam::logits_from_cams(cams, head.bias);
  for (int n = 0; n < 2; ++n) {
    const auto oracle = logit_oracle(f, head, n);
    for (int i = 0; i < 3; ++i)
      CHECK(logits(n, i) == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("map extraction is linear in features and weights") {
  Rng rng(110);
  const Tensor f = random_features<float>(rng, 1, 3, 4, 4);
  HeadParams head = random_head<float>(rng, 2, 3, false);

  Tensor f2 = f;
  for (std::size_t i = 0; i < f2.size(); ++i) f2[i] *= 3.f;
  const CamStack a = catkd::cam::compute_cams(f, head);
  const CamStack b = catkd::cam::compute_cams(f2, head);
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    CHECK(b.maps[i] == doctest::Approx(3.f * a.maps[i]).epsilon(1e-5));

  HeadParams head2 = head;
  for (auto& v : head2.weights.v) v *= -2.f;
  const CamStack c = catkd::cam::compute_cams(f, head2);
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    CHECK(c.maps[i] == doctest::Approx(-2.f * a.maps[i]).epsilon(1e-5));
}

TEST_CASE("per-sample and batched map extraction agree") {
  Rng rng(111);
  const Tensor f = random_features<float>(rng, 3, 4, 4, 4);
  const HeadParams head = random_head<float>(rng, 5, 4, false);
  const CamStack batched = catkd::cam::compute_cams(f, head);
  for (int n = 0; n < 3; ++n) {
    const CamStack single = catkd::cam::compute_cams(f.slice(n), head);
    for (int i = 0; i < 5; ++i)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(single.maps.at(0, i, y, x) == batched.maps.at(n, i, y, x));
  }
}

TEST_CASE("map extraction rejects channel mismatch") {
  Rng rng(112);
  const Tensor f = random_features<float>(rng, 1, 4, 2, 2);
  const HeadParams head = random_head<float>(rng, 3, 6, false);
  CHECK_THROWS_WITH_AS(catkd::cam::compute_cams(f, head), doctest::Contains("head-shape"),
                       Error);
}
