#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "slots/rng.hpp"

using namespace slots;

TEST(Rng, EngineMatchesStandardMt19937_64) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the C++ standard.
  std::mt19937_64 reference;
  reference.discard(9999);
  EXPECT_EQ(reference(), 9981545732273789042ULL);
  Rng rng(std::mt19937_64::default_seed);
  for (int i = 0; i < 9999; ++i) rng.next_u64();
  EXPECT_EQ(rng.next_u64(), 9981545732273789042ULL);
}

TEST(Rng, SplitMix64KnownValue) {
  // First output of the reference splitmix64 generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a(42, Stream::shuffle), b(42, Stream::shuffle), c(42, Stream::augment), d(43, Stream::shuffle);
  const auto first = a.next_u64();
  EXPECT_EQ(first, b.next_u64());
  EXPECT_NE(first, c.next_u64());
  EXPECT_NE(first, d.next_u64());
  EXPECT_NE(Rng(42, Stream::shuffle, 1).next_u64(), first);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(Rng, BelowIsUnbiased) {
  Rng rng(2);
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (const auto& [v, c] : counts) EXPECT_NEAR(c / 70000.0, 1.0 / 7.0, 0.006) << v;
  EXPECT_EQ(rng.below(1), 0u);
}

TEST(Rng, NormalMoments) {
  Rng rng(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, ShuffleIsPermutationAndSeeded) {
  std::vector<int> a(50), b;
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(4), r2(4);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  std::vector<int> id(50);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_NE(a, id);
}
