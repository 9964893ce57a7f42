#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdalr/augmentation.hpp"
#include "sdalr/network.hpp"
#include "sdalr/signal.hpp"

namespace sdalr {

/// Probability-weighted class centres in feature space.
struct PrototypeSet {
  torch::Tensor centers;      ///< [C, D] double
  std::vector<double> mass;   ///< sum_i p_c(x_i) per class
  std::vector<bool> empty;    ///< mass below kEmptyMass

  static constexpr double kEmptyMass = 1e-8;

  std::int64_t class_count() const { return centers.size(0); }
  std::int64_t feature_dim() const { return centers.size(1); }
};

/// eta_c = sum_i p_c(x_i) f(x_i) / sum_i p_c(x_i), computed in double.
PrototypeSet compute_prototypes(const torch::Tensor& features, const torch::Tensor& probs);

struct InitialLabel {
  int label = kUnreliable;
  double top_similarity = 0.0;
};

/// Cosine similarity against every non-empty prototype; the best class if its
/// similarity strictly exceeds `threshold`, else -1. Ties go to the lowest
/// class index. A zero-norm feature yields -1.
InitialLabel initial_label(std::span<const double> feature, const PrototypeSet& prototypes, double threshold);
/// Row-wise initial_label over a [N, D] feature matrix.
std::vector<InitialLabel> initial_labels(const torch::Tensor& features, const PrototypeSet& prototypes,
                                         double threshold);

/// Strict-majority vote: the class with more than m/2 ballots, else -1.
/// Abstentions (-1) count toward m but never toward a class.
int vote(std::span<const int> ballots);

struct VotingOptions {
  double threshold = 0.6;
  /// When false each sample casts a single ballot from the original waveform.
  bool voting = true;
  AugmentationParams augmentation;
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;
};

struct PseudoLabelAssignment {
  std::vector<int> labels;
  /// Best cosine similarity of the original (un-augmented) sample.
  std::vector<double> top_similarity;
  /// Row-major [N, ballots_per_sample]: original, flip, random zero, cyclic shift.
  std::vector<int> ballots;
  std::size_t ballots_per_sample = 0;
  PrototypeSet prototypes;

  std::size_t size() const { return labels.size(); }
  std::span<const int> ballots_of(std::size_t i) const {
    return {ballots.data() + i * ballots_per_sample, ballots_per_sample};
  }
  std::size_t reliable_count() const;
  /// Accuracy among reliable samples against `truth`; nullopt if none are reliable.
  std::optional<double> reliable_accuracy(const std::vector<int>& truth) const;
};

/// Features and probabilities for a list of waveforms, evaluated in batches
/// under eval mode without autograd. Features are returned as double.
struct Embedding {
  torch::Tensor features;  ///< [N, D]
  torch::Tensor probs;     ///< [N, C]
};
Embedding embed(ModelState& model, const std::vector<const Waveform*>& waveforms, std::size_t batch_size = 256);
Embedding embed(ModelState& model, const DomainDataset& data, std::size_t batch_size = 256);

/// Prototypes from the original target samples, then one ballot per member of
/// the augmented set against those same prototypes, then a vote.
PseudoLabelAssignment assign_labels(ModelState& model, const DomainDataset& target, const VotingOptions& options);

struct BalancedEntry {
  Waveform waveform;
  int label = kUnreliable;
  bool is_duplicate = false;
  std::optional<AugmentationKind> augmentation;
  std::size_t source_index = 0;
};

struct BalancedTargetSet {
  std::vector<BalancedEntry> entries;
  std::vector<std::string> warnings;

  /// Per-class counts of reliable entries.
  std::vector<std::size_t> class_counts(int class_count) const;
  std::size_t unreliable_count() const;
  std::size_t duplicate_count() const;
};

/// Tops every non-empty reliable class up to the largest reliable class by
/// duplicating random members, each duplicate passed through one randomly
/// chosen augmentation. Unreliable samples are appended unchanged.
/// Throws TrainingError when nothing is reliable.
BalancedTargetSet rebalance(const DomainDataset& target, const PseudoLabelAssignment& labels,
                            const AugmentationParams& params, std::mt19937_64& rng);

/// Same, over raw label vectors (used by tests and by rebalance itself).
BalancedTargetSet rebalance(const DomainDataset& target, std::span<const int> labels,
                            const AugmentationParams& params, std::mt19937_64& rng);

}  // namespace sdalr
