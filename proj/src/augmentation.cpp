#include "sdalr/augmentation.hpp"

#include <algorithm>
#include <cmath>

#include "sdalr/error.hpp"

namespace sdalr {

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::Flip: return "flip";
    case AugmentationKind::RandomZero: return "random_zero";
    case AugmentationKind::CyclicShift: return "cyclic_shift";
  }
  return "unknown";
}

AugmentationKind augmentation_from_string(const std::string& name) {
  if (name == "flip") return AugmentationKind::Flip;
  if (name == "random_zero") return AugmentationKind::RandomZero;
  if (name == "cyclic_shift") return AugmentationKind::CyclicShift;
  throw ConfigError("unknown augmentation '" + name + "'");
}

Waveform flip(std::span<const float> x) { return Waveform(x.rbegin(), x.rend()); }

Waveform negate(std::span<const float> x) {
  Waveform out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](float v) { return -v; });
  return out;
}

namespace {

std::size_t zero_length(std::size_t L, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("zero fraction must lie in (0, 1), got " + std::to_string(rho));
  }
  return static_cast<std::size_t>(std::lround(rho * static_cast<double>(L)));
}

}  // namespace

Waveform random_zero_at(std::span<const float> x, double rho, std::size_t start) {
  const std::size_t len = zero_length(x.size(), rho);
  if (start + len > x.size()) throw std::out_of_range("zeroed segment exceeds the window");
  Waveform out(x.begin(), x.end());
  std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(start), len, 0.0f);
  return out;
}

Waveform random_zero(std::span<const float> x, double rho, std::mt19937_64& rng) {
  const std::size_t len = zero_length(x.size(), rho);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - len);
  return random_zero_at(x, rho, pick(rng));
}

Waveform cyclic_shift(std::span<const float> x, std::size_t offset) {
  const std::size_t L = x.size();
  if (offset >= L && !(L == 0 && offset == 0)) {
    throw std::out_of_range("cyclic shift offset " + std::to_string(offset) + " outside [0, " +
                            std::to_string(L) + ")");
  }
  Waveform out(L);
  std::rotate_copy(x.begin(), x.end() - static_cast<std::ptrdiff_t>(offset), x.end(), out.begin());
  return out;
}

Waveform augment(AugmentationKind kind, std::span<const float> x, const AugmentationParams& params,
                 std::mt19937_64& rng) {
  switch (kind) {
    case AugmentationKind::Flip:
      return params.flip_negates ? negate(x) : flip(x);
    case AugmentationKind::RandomZero:
      return random_zero(x, params.zero_fraction, rng);
    case AugmentationKind::CyclicShift: {
      if (x.size() < 2) return Waveform(x.begin(), x.end());
      std::uniform_int_distribution<std::size_t> pick(1, x.size() - 1);
      return cyclic_shift(x, pick(rng));
    }
  }
  throw std::logic_error("unhandled augmentation kind");
}

AugmentedSet build_augmented_set(const SignalSample& x, const AugmentationParams& params,
                                 std::mt19937_64& rng) {
  AugmentedSet set{x, {}};
  for (auto kind : {AugmentationKind::Flip, AugmentationKind::RandomZero, AugmentationKind::CyclicShift}) {
    set.variants.emplace_back(kind, augment(kind, x.waveform, params, rng));
  }
  return set;
}

}  // namespace sdalr
