#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace sdalr {

using Waveform = std::vector<float>;

/// Sentinel pseudo-label for samples the voting step could not trust.
inline constexpr int kUnreliable = -1;

struct SignalSample {
  Waveform waveform;
  std::optional<int> label;
  std::string domain_id;
  std::string source_file;
};

/// Immutable collection of equal-length windows from one operating condition.
///
/// Construction validates the invariants every consumer relies on: a single
/// window length, finite values, and labels (when present) in [0, C).
class DomainDataset {
 public:
  DomainDataset() = default;
  DomainDataset(std::string domain_id, int class_count,
                std::vector<SignalSample> samples);

  const std::string& domain_id() const { return domain_id_; }
  int class_count() const { return class_count_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t window_length() const;

  const std::vector<SignalSample>& samples() const { return samples_; }
  const SignalSample& operator[](std::size_t i) const { return samples_[i]; }

  /// True when every sample carries a label.
  bool labeled() const;
  /// Labels in sample order; throws DataError if any sample is unlabeled.
  std::vector<int> labels() const;
  /// Per-class sample counts over labeled samples.
  std::vector<std::size_t> class_counts() const;

  /// Subset by index, preserving order.
  DomainDataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::string domain_id_;
  int class_count_ = 0;
  std::vector<SignalSample> samples_;
};

struct TransferTask {
  std::string source_domain;
  std::string target_domain;

  TransferTask() = default;
  TransferTask(std::string source, std::string target);

  /// Parses "A1->A2" (also accepts "A1:A2").
  static TransferTask parse(const std::string& text);
  std::string name() const { return source_domain + "->" + target_domain; }

  bool operator==(const TransferTask&) const = default;
};

}  // namespace sdalr
