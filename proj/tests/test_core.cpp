// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <limits>
#include <set>

#include "catkd/mat.hpp"
#include "catkd/rng.hpp"
#include "catkd/tensor.hpp"

using catkd::Mat;
using catkd::Rng;
using catkd::Tensor;
using catkd::TensorD;

TEST_CASE("tensor indexing is NCHW row-major") {
  Tensor t(2, 3, 4, 5);
  CHECK(t.size() == 2u * 3 * 4 * 5);
  t.at(1, 2, 3, 4) = 7.f;
  // Last element of the buffer.
  CHECK(t[t.size() - 1] == 7.f);
  t.at(0, 0, 0, 1) = 3.f;
  CHECK(t[1] == 3.f);

  // plane(n, c) points at the (h*w)-sized slice.
  t.at(1, 0, 0, 0) = 11.f;
  CHECK(t.plane(1, 0)[0] == 11.f);
}

TEST_CASE("tensor cast widens and narrows") {
  Tensor t(1, 1, 1, 3);
  t[0] = 1.5f;
  t[1] = -2.f;
  t[2] = 0.25f;
  TensorD d = t.cast<double>();
  CHECK(d[1] == doctest::Approx(-2.0));
  Tensor back = d.cast<float>();
  CHECK(back[2] == 0.25f);
}

TEST_CASE("tensor finiteness check") {
  Tensor t(1, 1, 2, 2);
  CHECK(t.all_finite());
  t[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("mat rows are contiguous") {
  Mat m(3, 4);
  m(2, 1) = 5.f;
  CHECK(m.row(2)[1] == 5.f);
  CHECK(m.v[2 * 4 + 1] == 5.f);
}

TEST_CASE("rng reproduces streams bit-exactly") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42), d(43);
  int differing = 0;
  for (int i = 0; i < 100; ++i) differing += c.next_u64() != d.next_u64();
  CHECK(differing > 95);
}

TEST_CASE("rng derived streams are independent of parent draws") {
  Rng a(7);
  (void)a.next_u64();
  (void)a.normal();
  Rng child1 = a.derive("data");

  Rng b(7);
  Rng child2 = b.derive("data");

  // Deriving depends only on (seed, tag), not on how much the parent drew.
  for (int i = 0; i < 100; ++i) CHECK(child1.next_u64() == child2.next_u64());

  Rng other = b.derive("init");
  int differing = 0;
  Rng child3 = Rng(7).derive("data");
  for (int i = 0; i < 100; ++i) {
    const auto x = child3.next_u64();
    differing += x != other.next_u64();
  }
  CHECK(differing > 95);
}

TEST_CASE("rng uniform and bernoulli ranges") {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = r.uniform_int(3, 7);
    CHECK(k >= 3);
    CHECK(k <= 7);
  }
  // uniform_int covers the whole closed range.
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) seen.insert(r.uniform_int(0, 4));
  CHECK(seen.size() == 5u);
}

TEST_CASE("rng normal has sane first moments") {
  Rng r(123);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}
