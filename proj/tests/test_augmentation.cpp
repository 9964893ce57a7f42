#include "sdalr/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <gtest/gtest.h>

#include "sdalr/error.hpp"
#include "test_util.hpp"

namespace sdalr {
namespace {

using testing::random_waveform;

std::vector<float> sorted(Waveform w) {
  std::sort(w.begin(), w.end());
  return w;
}

TEST(Flip, ReversesTime) {
  EXPECT_EQ(flip(Waveform{1, 2, 3}), (Waveform{3, 2, 1}));
  EXPECT_EQ(flip(Waveform{1, 2, 1}), (Waveform{1, 2, 1}));
}

TEST(Flip, IsAnInvolution) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_waveform(1 + t * 7, rng);
    EXPECT_EQ(flip(flip(x)), x);
  }
}

TEST(Flip, NegateIsTheAlternative) {
  EXPECT_EQ(negate(Waveform{1, -2, 0}), (Waveform{-1, 2, -0.0f}));
}

TEST(RandomZero, ZeroesTheRequestedSegment) {
  EXPECT_EQ(random_zero_at(Waveform{5, 6, 7, 8}, 0.5, 1), (Waveform{5, 0, 0, 8}));
}

TEST(RandomZero, IntroducesRoundRhoLZeros) {
  std::mt19937_64 rng(2);
  for (double rho : {0.05, 0.1, 0.25, 0.5, 0.9}) {
    for (std::size_t L : {7u, 64u, 1000u}) {
      Waveform x(L);
      std::iota(x.begin(), x.end(), 1.0f);  // no pre-existing zeros
      const auto y = random_zero(x, rho, rng);
      const auto zeros = std::count(y.begin(), y.end(), 0.0f);
      EXPECT_EQ(zeros, std::lround(rho * static_cast<double>(L))) << "rho " << rho << " L " << L;
      EXPECT_LE(zeros, std::ceil(rho * static_cast<double>(L)));
    }
  }
}

TEST(RandomZero, SameSeedSameSegment) {
  std::mt19937_64 g(3);
  const auto x = random_waveform(512, g);
  std::mt19937_64 a(99), b(99);
  EXPECT_EQ(random_zero(x, 0.1, a), random_zero(x, 0.1, b));
}

TEST(RandomZero, RejectsBadFraction) {
  EXPECT_THROW(random_zero_at(Waveform{1, 2}, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(random_zero_at(Waveform{1, 2}, 1.0, 0), std::invalid_argument);
}

TEST(CyclicShift, RotatesRight) {
  EXPECT_EQ(cyclic_shift(Waveform{1, 2, 3, 4}, 1), (Waveform{4, 1, 2, 3}));
  EXPECT_EQ(cyclic_shift(Waveform{1, 2, 3, 4}, 0), (Waveform{1, 2, 3, 4}));
}

TEST(CyclicShift, ComposesToIdentity) {
  std::mt19937_64 rng(4);
  const auto x = random_waveform(37, rng);
  for (std::size_t a = 1; a < x.size(); ++a) EXPECT_EQ(cyclic_shift(cyclic_shift(x, a), x.size() - a), x);
}

TEST(CyclicShift, MatchesIndexDefinition) {
  std::mt19937_64 rng(5);
  const auto x = random_waveform(16, rng);
  const std::size_t L = x.size();
  for (std::size_t off = 0; off < L; ++off) {
    const auto y = cyclic_shift(x, off);
    for (std::size_t i = 0; i < L; ++i) EXPECT_EQ(y[i], x[(i + L - off) % L]);
  }
}

TEST(CyclicShift, RejectsOffsetOutOfRange) { EXPECT_THROW(cyclic_shift(Waveform{1, 2}, 2), std::out_of_range); }

TEST(Augmentations, PreserveLengthFinitenessAndHistogram) {
  std::mt19937_64 rng(6);
  const AugmentationParams params;
  for (int t = 0; t < 25; ++t) {
    const auto x = random_waveform(64 + t, rng);
    for (auto kind : {AugmentationKind::Flip, AugmentationKind::RandomZero, AugmentationKind::CyclicShift}) {
      const auto y = augment(kind, x, params, rng);
      ASSERT_EQ(y.size(), x.size());
      EXPECT_TRUE(std::all_of(y.begin(), y.end(), [](float v) { return std::isfinite(v); }));
      if (kind != AugmentationKind::RandomZero) EXPECT_EQ(sorted(y), sorted(x));
    }
  }
}

TEST(Augmentations, StochasticShiftNeverIdentity) {
  std::mt19937_64 rng(7);
  Waveform x(8);
  std::iota(x.begin(), x.end(), 0.0f);
  for (int t = 0; t < 200; ++t) EXPECT_NE(augment(AugmentationKind::CyclicShift, x, {}, rng), x);
}

TEST(Augmentations, NamesRoundTrip) {
  for (auto kind : {AugmentationKind::Flip, AugmentationKind::RandomZero, AugmentationKind::CyclicShift}) {
    EXPECT_EQ(augmentation_from_string(to_string(kind)), kind);
  }
  EXPECT_THROW(augmentation_from_string("mixup"), ConfigError);
}

TEST(AugmentedSet, HasFourMembersInOrder) {
  std::mt19937_64 rng(8);
  SignalSample s{random_waveform(128, rng), 1, "d", "f"};
  const auto set = build_augmented_set(s, {}, rng);
  ASSERT_EQ(set.size(), 4u);
  EXPECT_EQ(set.variants[0].first, AugmentationKind::Flip);
  EXPECT_EQ(set.variants[1].first, AugmentationKind::RandomZero);
  EXPECT_EQ(set.variants[2].first, AugmentationKind::CyclicShift);
  EXPECT_EQ(set.variants[0].second, flip(s.waveform));
  EXPECT_EQ(set.original.waveform, s.waveform);
}

TEST(AugmentedSet, ZeroWaveformIsFixedByEveryMember) {
  std::mt19937_64 rng(9);
  SignalSample s{Waveform(256, 0.0f), 0, "d", "f"};
  const auto set = build_augmented_set(s, {}, rng);
  for (const auto& [kind, w] : set.variants) EXPECT_EQ(w, s.waveform) << to_string(kind);
}

TEST(AugmentedSet, DeterministicUnderSeed) {
  std::mt19937_64 g(10);
  SignalSample s{random_waveform(300, g), 0, "d", "f"};
  std::mt19937_64 a(5), b(5);
  const auto x = build_augmented_set(s, {}, a);
  const auto y = build_augmented_set(s, {}, b);
  for (std::size_t k = 0; k < x.variants.size(); ++k) EXPECT_EQ(x.variants[k].second, y.variants[k].second);
}

}  // namespace
}  // namespace sdalr
