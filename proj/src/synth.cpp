#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "sdalr/datasets.hpp"
#include "sdalr/error.hpp"

namespace sdalr {
namespace {

// splitmix64 finaliser, used to derive independent stream seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<double> default_ladder(double first, double ratio, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = first * std::pow(ratio, i);
  return v;
}

}  // namespace

SynthConfig resolved(SynthConfig c) {
  if (c.class_count < 2) throw ConfigError("synthetic benchmark needs at least 2 classes");
  if (c.samples_per_class < 50) throw ConfigError("synthetic benchmark needs at least 50 samples per class");
  if (c.window_len <= 0 || c.sample_rate <= 0 || c.decay <= 0 || c.noise_std < 0) {
    throw ConfigError("synthetic generator parameters must be positive");
  }
  const int n = c.class_count;
  if (c.fault_freqs.empty()) c.fault_freqs = default_ladder(80.0, 1.5, n);
  if (c.resonance_freqs.empty()) c.resonance_freqs = default_ladder(450.0, 1.9, n);
  if (static_cast<int>(c.fault_freqs.size()) != n || static_cast<int>(c.resonance_freqs.size()) != n) {
    throw ConfigError("synthetic frequency tables must have one entry per class");
  }
  return c;
}

DomainDataset synth_domain(const SynthConfig& raw_config, const DomainShift& shift,
                           std::uint64_t seed, const std::string& domain_id) {
  const SynthConfig c = resolved(raw_config);
  if (shift.speed_factor <= 0 || shift.noise_scale < 0) throw ConfigError("invalid domain shift");

  std::mt19937_64 rng(mix(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double dt = 1.0 / c.sample_rate;
  const double noise = c.noise_std * shift.noise_scale;
  const auto L = static_cast<std::size_t>(c.window_len);
  // Resonance response is negligible after ~7 time constants.
  const double tail = 7.0 / (c.decay * shift.speed_factor);

  std::vector<SignalSample> samples;
  samples.reserve(static_cast<std::size_t>(c.class_count * c.samples_per_class));
  for (int cls = 0; cls < c.class_count; ++cls) {
    const auto k = static_cast<std::size_t>(cls);
    for (int i = 0; i < c.samples_per_class; ++i) {
      const double fault = c.fault_freqs[k] * shift.speed_factor *
                           (1.0 + c.freq_jitter * (2.0 * unit(rng) - 1.0));
      const double resonance = c.resonance_freqs[k] * shift.speed_factor;
      const double decay = c.decay * shift.speed_factor;
      const double amp = 1.0 + c.amplitude_jitter * (2.0 * unit(rng) - 1.0);
      const double period = 1.0 / fault;
      const double phase = unit(rng) * period;

      SignalSample s;
      s.waveform.assign(L, 0.0f);
      const double duration = static_cast<double>(L) * dt;
      for (double t0 = phase - std::ceil(tail / period) * period; t0 < duration; t0 += period) {
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(t0 / dt)));
        for (std::size_t n = first; n < L; ++n) {
          const double tau = static_cast<double>(n) * dt - t0;
          if (tau > tail) break;
          s.waveform[n] += static_cast<float>(amp * std::exp(-decay * tau) *
                                              std::sin(2.0 * std::numbers::pi * resonance * tau));
        }
      }
      for (auto& v : s.waveform) v += static_cast<float>(noise * gauss(rng));
      s.label = cls;
      s.domain_id = domain_id;
      s.source_file = "synthetic";
      samples.push_back(std::move(s));
    }
  }
  return DomainDataset(domain_id, c.class_count, std::move(samples));
}

std::pair<DomainDataset, DomainDataset> synth_benchmark(const SynthConfig& config,
                                                        const DomainShift& shift,
                                                        std::uint64_t seed) {
  const std::uint64_t stream = mix(seed);
  return {synth_domain(config, DomainShift{}, stream ^ 0x5EEDull, "source"),
          synth_domain(config, shift, stream ^ 0x7A46ull, "target")};
}

}  // namespace sdalr
