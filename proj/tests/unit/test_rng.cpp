#include <doctest.h>

#include <string>

#include <cmath>
#include <set>
#include <vector>

#include "deepheart/rng.hpp"

using deepheart::Philox;

TEST_SUITE("rng") {
  TEST_CASE("same seed and stream give the same sequence") {
    Philox a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("streams and seeds are independent") {
    Philox a(42, 0), b(42, 1), c(43, 0);
    const auto x = a.next_u64();
    CHECK(x != b.next_u64());
    CHECK(x != c.next_u64());
  }

  TEST_CASE("first outputs are pinned across platforms") {
    // Philox4x32-10 with key (0, 0) and counter (0, 0, 0, 0).
    Philox zero(0, 0);
    CHECK(zero.next_u32() == 0x6627e8d5u);
    CHECK(zero.next_u32() == 0xe169c58du);
    CHECK(zero.next_u32() == 0xbc57ac4cu);
    CHECK(zero.next_u32() == 0x9b00dbd8u);
  }

  TEST_CASE("uniform lies in [0, 1) with the right mean") {
    Philox rng(3);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.005);
  }

  TEST_CASE("normal has unit variance") {
    Philox rng(11);
    double s = 0.0, ss = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      s += z;
      ss += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(ss / n - mean * mean - 1.0) < 0.02);
  }

  TEST_CASE("below covers the range without exceeding it") {
    Philox rng(5);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
      const auto k = rng.below(7);
      REQUIRE(k < 7);
      ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  }

  TEST_CASE("keyed hash depends on every input") {
    using deepheart::keyed_hash;
    const auto h = keyed_hash(1, "split", "u1");
    CHECK(h == keyed_hash(1, "split", "u1"));
    CHECK(h != keyed_hash(2, "split", "u1"));
    CHECK(h != keyed_hash(1, "other", "u1"));
    CHECK(h != keyed_hash(1, "split", "u2"));
    // Salt and id are not simply concatenated.
    CHECK(keyed_hash(1, "ab", "c") != keyed_hash(1, "a", "bc"));
  }

  TEST_CASE("keyed_unit is uniform over many ids") {
    int below_half = 0;
    for (int i = 0; i < 10000; ++i) {
      const double u = deepheart::keyed_unit(9, "t", "user" + std::to_string(i));
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      below_half += u < 0.5;
    }
    CHECK(std::abs(below_half - 5000) < 300);
  }

  TEST_CASE("fnv1a64 reference values") {
    CHECK(deepheart::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(deepheart::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }
}
