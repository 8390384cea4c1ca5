#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mdmf/rng.hpp"

using namespace mdmf::rng;

TEST_SUITE("rng") {
  TEST_CASE("philox4x32-10 known-answer vectors") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("streams are addressed, not ordered") {
    Stream a(Key(42), 1, 2, 3);
    Stream b(Key(42), 1, 2, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    std::set<std::uint64_t> firsts;
    for (std::uint32_t c = 0; c < 50; ++c) firsts.insert(Stream(Key(42), 1, 2, c).next_u64());
    firsts.insert(Stream(Key(43), 1, 2, 0).next_u64());
    CHECK(firsts.size() == 51);
  }

  TEST_CASE("derived keys differ by tag and are stable") {
    const Key k(7);
    CHECK(derive(k, Tag::real_set) == derive(k, Tag::real_set));
    CHECK_FALSE(derive(k, Tag::real_set) == derive(k, Tag::fake_set));
    CHECK_FALSE(k.derive(1) == k);
  }

  TEST_CASE("uniform lies in the open unit interval with mean 1/2") {
    Stream s(Key(1));
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = s.uniform();
      REQUIRE(u > 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
  }

  TEST_CASE("normal moments") {
    Stream s(Key(2));
    const int n = 200000;
    double m1 = 0.0;
    double m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = s.normal();
      m1 += z;
      m2 += z * z;
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::abs(m1) < 5.0 / std::sqrt(n));
    CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / n));
  }

  TEST_CASE("bounded integers are in range and balanced") {
    Stream s(Key(3));
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
      const auto v = s.below(7);
      REQUIRE(v < 7);
      ++counts[v];
    }
    const double p = 1.0 / 7.0;
    for (int c : counts) CHECK(std::abs(c / double(n) - p) < 5.0 * std::sqrt(p * (1 - p) / n));
    CHECK(s.below(1) == 0);
  }

  TEST_CASE("rademacher and bernoulli frequencies") {
    Stream s(Key(4));
    const int n = 100000;
    int plus = 0;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const double r = s.rademacher();
      REQUIRE((r == 1.0 || r == -1.0));
      plus += r > 0;
      hits += s.bernoulli(0.3);
    }
    CHECK(std::abs(plus / double(n) - 0.5) < 5.0 * std::sqrt(0.25 / n));
    CHECK(std::abs(hits / double(n) - 0.3) < 5.0 * std::sqrt(0.21 / n));
    Stream t(Key(5));
    for (int i = 0; i < 1000; ++i) {
      CHECK_FALSE(t.bernoulli(0.0));
      CHECK(t.bernoulli(1.0));
    }
  }
}
