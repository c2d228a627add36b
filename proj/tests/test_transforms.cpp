// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "catkd/cam/transforms.hpp"
#include "catkd/error.hpp"
#include "catkd/rng.hpp"

using catkd::Error;
using catkd::Rng;
using catkd::Tensor;
using catkd::TensorD;
using catkd::cam::CamStack;
using catkd::cam::CamStackD;
using catkd::cam::NormOrder;
using catkd::cam::SubsetPolicy;

namespace {

template <typename T>
catkd::cam::CamStackT<T> random_stack(Rng& rng, int n, int k, int h, int w, double lo = -1.0,
                                      double hi = 1.0) {
  catkd::cam::CamStackT<T> s;
  s.maps = catkd::TensorT<T>(n, k, h, w);
  for (std::size_t i = 0; i < s.maps.size(); ++i)
    s.maps[i] = static_cast<T>(rng.uniform(lo, hi));
  return s;
}

CamStack stack_2x2(std::initializer_list<float> vals) {
  CamStack s;
  s.maps = Tensor(1, 1, 2, 2);
  int i = 0;
  for (float v : vals) s.maps[i++] = v;
  return s;
}

}  // namespace

// ------------------------------------------------------------ pooling -----

TEST_CASE("pooling ones stays ones") {
  CamStack s;
  s.maps = Tensor(1, 2, 4, 4);
  s.maps.fill(1.f);
  const CamStack p = catkd::cam::pool_cams(s, 2, 2);
  CHECK(p.height() == 2);
  CHECK(p.width() == 2);
  REQUIRE(p.pooled.has_value());
  CHECK(p.pooled->first == 2);
  CHECK(p.pooled->second == 2);
  for (std::size_t i = 0; i < p.maps.size(); ++i) CHECK(p.maps[i] == doctest::Approx(1.f));
}

TEST_CASE("pooling 2x2 to 1x1 takes the global mean") {
  const CamStack s = stack_2x2({1.f, 2.f, 3.f, 4.f});
  const CamStack p = catkd::cam::pool_cams(s, 1, 1);
  CHECK(p.maps[0] == doctest::Approx(2.5f));
}

TEST_CASE("pooling 8x8 to 2x2 equals the explicit block-average oracle") {
  Rng rng(201);
  const CamStackD s = random_stack<double>(rng, 2, 3, 8, 8);
  const CamStackD p = catkd::cam::pool_cams(s, 2, 2);
  for (int n = 0; n < 2; ++n) {
    for (int k = 0; k < 3; ++k) {
      for (int by = 0; by < 2; ++by) {
        for (int bx = 0; bx < 2; ++bx) {
          double sum = 0.0;
          for (int y = by * 4; y < (by + 1) * 4; ++y)
            for (int x = bx * 4; x < (bx + 1) * 4; ++x) sum += s.maps.at(n, k, y, x);
          CHECK(p.maps.at(n, k, by, bx) == doctest::Approx(sum / 16.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("pooling with non-divisible target follows the declared window rule") {
  Rng rng(202);
  const CamStackD s = random_stack<double>(rng, 1, 1, 5, 7);
  const CamStackD p = catkd::cam::pool_cams(s, 3, 2);
  for (int py = 0; py < 2; ++py) {
    const int y0 = py * 5 / 2;
    const int y1 = ((py + 1) * 5 + 1) / 2;
    for (int px = 0; px < 3; ++px) {
      const int x0 = px * 7 / 3;
      const int x1 = ((px + 1) * 7 + 2) / 3;
      double sum = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) sum += s.maps.at(0, 0, y, x);
      CHECK(p.maps.at(0, 0, py, px) ==
            doctest::Approx(sum / ((y1 - y0) * (x1 - x0))).epsilon(1e-12));
    }
  }
}

TEST_CASE("pooling preserves the global mean when the target divides the source") {
  Rng rng(203);
  const CamStackD s = random_stack<double>(rng, 1, 2, 8, 8);
  const CamStackD p = catkd::cam::pool_cams(s, 4, 4);
  for (int k = 0; k < 2; ++k) {
    double src_mean = 0.0, dst_mean = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) src_mean += s.maps.at(0, k, y, x);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) dst_mean += p.maps.at(0, k, y, x);
    CHECK(dst_mean / 16.0 == doctest::Approx(src_mean / 64.0).epsilon(1e-12));
  }
}

TEST_CASE("pooling refuses upsampling") {
  Rng rng(204);
  const CamStack s = random_stack<float>(rng, 1, 1, 4, 4);
  CHECK_THROWS_WITH_AS(catkd::cam::pool_cams(s, 8, 8), doctest::Contains("invalid-target"),
                       Error);
  CHECK_THROWS_AS(catkd::cam::pool_cams(s, 2, 5), Error);
  CHECK_THROWS_AS(catkd::cam::pool_cams(s, 0, 2), Error);
}

TEST_CASE("pooling must be the first transform") {
  Rng rng(205);
  CamStack s = random_stack<float>(rng, 1, 1, 4, 4);
  const CamStack pooled = catkd::cam::pool_cams(s, 2, 2);
  CHECK_THROWS_WITH_AS(catkd::cam::pool_cams(pooled, 2, 2),
                       doctest::Contains("transform-order"), Error);

  const CamStack norm = catkd::cam::normalize_cams(s, NormOrder::l2);
  CHECK_THROWS_AS(catkd::cam::pool_cams(norm, 2, 2), Error);

  const CamStack bin = catkd::cam::binarize_cams(s);
  CHECK_THROWS_AS(catkd::cam::pool_cams(bin, 2, 2), Error);
}

TEST_CASE("pooling backward spreads gradients uniformly over windows") {
  // 4x4 -> 2x2: each source cell belongs to exactly one window of 4 cells.
  TensorD g(1, 1, 2, 2);
  g.at(0, 0, 0, 0) = 4.0;
  g.at(0, 0, 0, 1) = 8.0;
  g.at(0, 0, 1, 0) = -4.0;
  g.at(0, 0, 1, 1) = 0.0;
  const TensorD dx = catkd::cam::pool_cams_backward(g, 4, 4);
  CHECK(dx.at(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(dx.at(0, 0, 1, 1) == doctest::Approx(1.0));
  CHECK(dx.at(0, 0, 0, 2) == doctest::Approx(2.0));
  CHECK(dx.at(0, 0, 2, 0) == doctest::Approx(-1.0));
  CHECK(dx.at(0, 0, 3, 3) == doctest::Approx(0.0));
}

TEST_CASE("pooling backward is the exact adjoint of pooling") {
  // <pool(x), g> == <x, pool_backward(g)> for random x, g (linearity).
  Rng rng(206);
  const CamStackD x = random_stack<double>(rng, 1, 2, 5, 7);
  const CamStackD px = catkd::cam::pool_cams(x, 3, 2);
  TensorD g(1, 2, 2, 3);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.uniform(-1.0, 1.0);
  const TensorD gback = catkd::cam::pool_cams_backward(g, 5, 7);

  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < px.maps.size(); ++i) lhs += px.maps[i] * g[i];
  for (std::size_t i = 0; i < x.maps.size(); ++i) rhs += x.maps[i] * gback[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

// -------------------------------------------------------- normalization ---

TEST_CASE("l2 normalization of [3,4] is [0.6,0.8]") {
  CamStack s;
  s.maps = Tensor(1, 1, 1, 2);
  s.maps[0] = 3.f;
  s.maps[1] = 4.f;
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::l2);
  CHECK(n.maps[0] == doctest::Approx(0.6f));
  CHECK(n.maps[1] == doctest::Approx(0.8f));
  CHECK(n.normalized == NormOrder::l2);
}

TEST_CASE("l1 normalization divides by the absolute sum") {
  CamStack s;
  s.maps = Tensor(1, 1, 1, 2);
  s.maps[0] = -3.f;
  s.maps[1] = 1.f;
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::l1);
  CHECK(n.maps[0] == doctest::Approx(-0.75f));
  CHECK(n.maps[1] == doctest::Approx(0.25f));
}

TEST_CASE("all-zero maps pass through normalization as zero") {
  CamStack s;
  s.maps = Tensor(1, 2, 3, 3);
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::l2);
  for (std::size_t i = 0; i < n.maps.size(); ++i) CHECK(n.maps[i] == 0.f);
}

TEST_CASE("normalization is scale invariant") {
  Rng rng(207);
  CamStackD s = random_stack<double>(rng, 1, 2, 4, 4);
  CamStackD scaled = s;
  for (std::size_t i = 0; i < scaled.maps.size(); ++i) scaled.maps[i] *= 7.3;
  const CamStackD a = catkd::cam::normalize_cams(s, NormOrder::l2, 1e-12);
  const CamStackD b = catkd::cam::normalize_cams(scaled, NormOrder::l2, 1e-12);
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    CHECK(a.maps[i] == doctest::Approx(b.maps[i]).epsilon(1e-6));
}

TEST_CASE("normalized maps have unit norm under the recorded order") {
  Rng rng(208);
  for (NormOrder order : {NormOrder::l1, NormOrder::l2}) {
    const CamStackD s = random_stack<double>(rng, 2, 3, 4, 4);
    const CamStackD n = catkd::cam::normalize_cams(s, order);
    for (int in = 0; in < 2; ++in) {
      for (int k = 0; k < 3; ++k) {
        const double* p = n.maps.plane(in, k);
        double norm = 0.0;
        for (int i = 0; i < 16; ++i)
          norm += order == NormOrder::l1 ? std::abs(p[i]) : p[i] * p[i];
        if (order == NormOrder::l2) norm = std::sqrt(norm);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("order none leaves the stack untouched") {
  Rng rng(209);
  const CamStack s = random_stack<float>(rng, 1, 2, 3, 3);
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::none);
  CHECK(n.normalized == NormOrder::none);
  for (std::size_t i = 0; i < s.maps.size(); ++i) CHECK(n.maps[i] == s.maps[i]);
}

TEST_CASE("double normalization is rejected") {
  Rng rng(210);
  const CamStack s = random_stack<float>(rng, 1, 1, 2, 2);
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::l2);
  CHECK_THROWS_WITH_AS(catkd::cam::normalize_cams(n, NormOrder::l2),
                       doctest::Contains("transform-order"), Error);
}

// ---------------------------------------------------------- binarization --

TEST_CASE("binarization thresholds at the map mean with >= ties") {
  const CamStack s = stack_2x2({1.f, 2.f, 3.f, 4.f});  // mean 2.5
  const CamStack b = catkd::cam::binarize_cams(s);
  CHECK(b.maps[0] == 0.f);
  CHECK(b.maps[1] == 0.f);
  CHECK(b.maps[2] == 1.f);
  CHECK(b.maps[3] == 1.f);
  CHECK(b.binarized);
}

TEST_CASE("constant maps binarize to all ones") {
  CamStack s;
  s.maps = Tensor(1, 1, 3, 3);
  s.maps.fill(0.7f);
  const CamStack b = catkd::cam::binarize_cams(s);
  for (std::size_t i = 0; i < b.maps.size(); ++i) CHECK(b.maps[i] == 1.f);
}

TEST_CASE("binarization matches the brute-force threshold oracle on 1000 maps") {
  Rng rng(211);
  for (int trial = 0; trial < 1000; ++trial) {
    const CamStackD s = random_stack<double>(rng, 1, 1, 8, 8, -2.0, 2.0);
    const CamStackD b = catkd::cam::binarize_cams(s);
    double mean = 0.0;
    for (int i = 0; i < 64; ++i) mean += s.maps[i];
    mean /= 64.0;
    int ones = 0;
    for (int i = 0; i < 64; ++i) {
      const double expected = s.maps[i] >= mean ? 1.0 : 0.0;
      CHECK(b.maps[i] == expected);
      ones += b.maps[i] == 1.0;
    }
    // The >=-mean rule always keeps at least one entry active.
    CHECK(ones >= 1);
  }
}

TEST_CASE("binarize after normalize is a transform-order error") {
  Rng rng(212);
  const CamStack s = random_stack<float>(rng, 1, 1, 4, 4);
  const CamStack n = catkd::cam::normalize_cams(s, NormOrder::l2);
  CHECK_THROWS_WITH_AS(catkd::cam::binarize_cams(n), doctest::Contains("transform-order"),
                       Error);
}

TEST_CASE("binarize then normalize is the legal order") {
  Rng rng(213);
  CamStack s = random_stack<float>(rng, 1, 2, 4, 4);
  const CamStack pooled = catkd::cam::pool_cams(s, 2, 2);
  const CamStack b = catkd::cam::binarize_cams(pooled);
  const CamStack n = catkd::cam::normalize_cams(b, NormOrder::l2);
  CHECK(n.binarized);
  CHECK(n.normalized == NormOrder::l2);
  REQUIRE(n.pooled.has_value());
}

// ----------------------------------------------------- category subsets ---

TEST_CASE("top-1 of [0.5, 0.3, 0.2] is category 0") {
  SubsetPolicy p{SubsetPolicy::Kind::top_n, 1, {}};
  const auto idx = catkd::cam::select_categories(std::vector<float>{0.5f, 0.3f, 0.2f}, p);
  REQUIRE(idx.size() == 1u);
  CHECK(idx[0] == 0);
}

TEST_CASE("bottom-2 of [0.5, 0.3, 0.2] is {1, 2}") {
  SubsetPolicy p{SubsetPolicy::Kind::bottom_n, 2, {}};
  const auto idx = catkd::cam::select_categories(std::vector<float>{0.5f, 0.3f, 0.2f}, p);
  REQUIRE(idx.size() == 2u);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 2);
}

TEST_CASE("ties go to the lower index") {
  SubsetPolicy p{SubsetPolicy::Kind::top_n, 2, {}};
  const auto idx = catkd::cam::select_categories(std::vector<float>{1.f, 2.f, 2.f, 2.f}, p);
  REQUIRE(idx.size() == 2u);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 2);
}

TEST_CASE("top-10 of random length-100 logits matches a full-sort oracle") {
  Rng rng(214);
  std::vector<double> logits(100);
  for (auto& v : logits) v = rng.uniform(-5.0, 5.0);

  SubsetPolicy p{SubsetPolicy::Kind::top_n, 10, {}};
  auto got = catkd::cam::select_categories(logits, p);

  std::vector<int> order(100);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  std::vector<int> expected(order.begin(), order.begin() + 10);
  std::sort(expected.begin(), expected.end());
  CHECK(got == expected);
}

TEST_CASE("n greater than K is a policy error") {
  SubsetPolicy p{SubsetPolicy::Kind::top_n, 4, {}};
  CHECK_THROWS_WITH_AS(catkd::cam::select_categories(std::vector<float>{1.f, 2.f, 3.f}, p),
                       doctest::Contains("policy"), Error);
  SubsetPolicy zero{SubsetPolicy::Kind::bottom_n, 0, {}};
  CHECK_THROWS_AS(catkd::cam::select_categories(std::vector<float>{1.f, 2.f}, zero), Error);
}

TEST_CASE("explicit lists are validated and sorted") {
  SubsetPolicy p{SubsetPolicy::Kind::explicit_list, 0, {2, 0}};
  const auto idx = catkd::cam::select_categories(std::vector<float>{1.f, 2.f, 3.f}, p);
  CHECK(idx == std::vector<int>{0, 2});

  SubsetPolicy bad{SubsetPolicy::Kind::explicit_list, 0, {0, 3}};
  CHECK_THROWS_AS(catkd::cam::select_categories(std::vector<float>{1.f, 2.f, 3.f}, bad), Error);
  SubsetPolicy dup{SubsetPolicy::Kind::explicit_list, 0, {1, 1}};
  CHECK_THROWS_AS(catkd::cam::select_categories(std::vector<float>{1.f, 2.f, 3.f}, dup), Error);
}

TEST_CASE("transform config validates its fields") {
  catkd::cam::TransformConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.epsilon = 1e-12;
  cfg.pool_w = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
