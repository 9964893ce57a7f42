#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdalr/signal.hpp"

namespace sdalr {

/// Splits a recording into consecutive non-overlapping windows (stride equals
/// window length), keeping at most `per_class_cap` windows. The tail shorter
/// than one window is dropped. Returned samples carry no label or domain tag.
std::vector<SignalSample> window_recording(std::span<const float> raw,
                                           std::size_t window_len,
                                           std::size_t per_class_cap);

struct LoaderOptions {
  std::size_t window_len = 2048;
  std::size_t per_class_cap = 2000;
  /// PU: name of the channel inside each measurement struct.
  std::string pu_channel = "vibration_1";
  /// JNU and text-format PU files: zero-based column holding the vibration signal.
  std::size_t text_column = 0;
};

/// Paderborn bearing codes in class-index order.
inline constexpr std::array<std::string_view, 8> kPuBearingCodes = {
    "K001", "KA04", "KA15", "KA22", "KA30", "KI14", "KI17", "KI21"};

/// JNU bearing states in class-index order.
inline constexpr std::array<std::string_view, 4> kJnuStates = {"H", "IR", "OR", "B"};

/// Operating-condition code for a PU domain ("A1" -> "N15_M01_F10").
std::string pu_condition(const std::string& domain);
/// Rotational speed in r/min for a JNU domain ("B1" -> 600).
int jnu_speed(const std::string& domain);

/// Loads one PU operating condition from `<root>/<bearing_code>/`.
///
/// Every file whose name contains the condition code is read in lexicographic
/// file-name order (`.mat` MATLAB level-5 containers, or `.csv`/`.txt`
/// columnar text); the measurement repetitions are concatenated and then
/// windowed.
DomainDataset load_pu(const std::filesystem::path& root, const std::string& domain,
                      const LoaderOptions& options = {});

/// Loads one JNU speed condition from `<root>/<state>_<speed>.csv`.
DomainDataset load_jnu(const std::filesystem::path& root, const std::string& domain,
                       const LoaderOptions& options = {});

/// Reads one numeric column of a delimited text file. Lines that do not parse
/// (headers, comments) are skipped; `skipped` receives their count.
std::vector<float> read_text_column(const std::filesystem::path& file, std::size_t column,
                                    std::size_t* skipped = nullptr);

// ---------------------------------------------------------------------------
// Synthetic two-domain benchmark

struct SynthConfig {
  int class_count = 4;
  int samples_per_class = 200;
  int window_len = 1024;
  double sample_rate = 12000.0;
  /// Impulse repetition frequency per class (Hz). Empty -> built-in defaults.
  std::vector<double> fault_freqs;
  /// Resonance frequency excited by each impulse, per class (Hz).
  std::vector<double> resonance_freqs;
  /// Exponential decay rate of the resonance (1/s).
  double decay = 900.0;
  double noise_std = 0.05;
  /// Relative per-sample jitter of the fault frequency.
  double freq_jitter = 0.03;
  /// Per-sample amplitude scale drawn from [1 - a, 1 + a].
  double amplitude_jitter = 0.2;
};

struct DomainShift {
  /// Multiplies every generator frequency.
  double speed_factor = 1.0;
  /// Multiplies the noise standard deviation.
  double noise_scale = 1.0;
};

/// Generates one labeled synthetic domain. Bit-identical for equal inputs.
DomainDataset synth_domain(const SynthConfig& config, const DomainShift& shift,
                           std::uint64_t seed, const std::string& domain_id);

/// Source (no shift) and target (`shift`) domains drawn from independent
/// streams of `seed`. Target labels are kept for evaluation only.
std::pair<DomainDataset, DomainDataset> synth_benchmark(const SynthConfig& config,
                                                        const DomainShift& shift,
                                                        std::uint64_t seed);

/// Fills empty frequency tables with the built-in defaults and validates.
SynthConfig resolved(SynthConfig config);

}  // namespace sdalr
