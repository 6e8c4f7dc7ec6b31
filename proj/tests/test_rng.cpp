#include <doctest.h>

#include <cmath>
#include <set>

#include "seqmon/rng.hpp"

using namespace seqmon;

TEST_CASE("philox known-answer vectors") {
  using B = Philox4x32::block_type;
  CHECK(Philox4x32::bijection(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::bijection(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::bijection(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("generator output is the block stream in counter order") {
  Philox4x32 rng(0, 0);
  const auto block0 = rng.generate_block(0);
  const auto block1 = rng.generate_block(1);
  for (auto v : block0) CHECK(rng() == v);
  for (auto v : block1) CHECK(rng() == v);
}

TEST_CASE("same seed and stream reproduce; different streams diverge") {
  Rng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a();
    CHECK(x == b());
    differs_c |= x != c();
    differs_d |= x != d();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("uniform01 stays in [0,1) and has the right mean") {
  Rng rng(1, 0);
  double sum = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("standard_normal moments") {
  Rng rng(2, 0);
  constexpr int n = 400000;
  double s1 = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("uniform_index covers its range") {
  Rng rng(3, 0);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto k = uniform_index(rng, 7);
    REQUIRE(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
  CHECK(uniform_index(rng, 1) == 0);
}
