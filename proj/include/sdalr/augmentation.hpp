#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdalr/signal.hpp"

namespace sdalr {

enum class AugmentationKind { Flip, RandomZero, CyclicShift };

std::string to_string(AugmentationKind kind);
AugmentationKind augmentation_from_string(const std::string& name);

struct AugmentationParams {
  /// Fraction of the window zeroed by RandomZero, in (0, 1).
  double zero_fraction = 0.1;
  /// Flip negates amplitude instead of reversing time.
  bool flip_negates = false;
};

/// Time reversal.
Waveform flip(std::span<const float> x);
/// Amplitude negation; the alternative reading of "flipping".
Waveform negate(std::span<const float> x);

/// Zeroes one contiguous segment of round(rho * L) samples starting at `start`.
Waveform random_zero_at(std::span<const float> x, double rho, std::size_t start);
/// As random_zero_at with the start drawn uniformly from the valid range.
Waveform random_zero(std::span<const float> x, double rho, std::mt19937_64& rng);

/// out[i] = x[(i - offset) mod L], 0 <= offset < L.
Waveform cyclic_shift(std::span<const float> x, std::size_t offset);

/// Applies `kind` with stochastic parameters; cyclic shift offsets are drawn
/// from [1, L-1].
Waveform augment(AugmentationKind kind, std::span<const float> x, const AugmentationParams& params,
                 std::mt19937_64& rng);

struct AugmentedSet {
  SignalSample original;
  std::vector<std::pair<AugmentationKind, Waveform>> variants;

  /// Original plus variants: the number of ballots cast per sample.
  std::size_t size() const { return variants.size() + 1; }
};

/// Original plus flip, random zero and cyclic shift, in that order.
AugmentedSet build_augmented_set(const SignalSample& x, const AugmentationParams& params,
                                 std::mt19937_64& rng);

}  // namespace sdalr
