#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdalr/augmentation.hpp"
#include "sdalr/losses.hpp"
#include "sdalr/network.hpp"
#include "sdalr/signal.hpp"

namespace sdalr {

struct AdaptationConfig {
  double alpha = 0.1;       ///< label smoothing
  double beta = 0.6;        ///< repulsion weight
  double threshold = 0.6;   ///< cosine similarity threshold for initial labels
  int batch_size = 64;

  double source_lr = 7e-3;
  int source_epochs = 10;
  double source_val_fraction = 0.2;

  double target_lr = 5e-4;
  int target_epochs = 20;

  double momentum = 0.9;
  double weight_decay = 1e-3;
  /// lr = lr0 * (1 + gamma * p)^(-power), p in [0, 1].
  double schedule_gamma = 10.0;
  double schedule_power = 0.75;

  /// Pseudo-labels are refreshed every `refresh_every` epochs; 0 labels once.
  int refresh_every = 1;

  bool voting = true;
  LossSwitches losses;
  bool car_normalize = true;
  bool freeze_classifier = true;
  AugmentationParams augmentation;

  /// Single-threaded, deterministic kernels only.
  bool strict_determinism = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

double scheduled_lr(double lr0, double progress, double gamma = 10.0, double power = 0.75);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  /// confusion[true][predicted], counts.
  std::vector<std::vector<std::int64_t>> confusion;

  std::vector<std::vector<double>> row_normalized() const;
};

EvalResult evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int class_count);
/// Argmax accuracy of `model` on a labeled dataset, in eval mode.
EvalResult evaluate(ModelState& model, const DomainDataset& dataset);
std::vector<int> predict(ModelState& model, const DomainDataset& dataset);

struct SourceTrainingResult {
  ModelState model;
  std::vector<double> loss_trace;
  double val_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

/// Supervised cross-entropy training on a stratified train split; the held-out
/// split only reports validation accuracy.
SourceTrainingResult train_source(const DomainDataset& dataset, const EncoderConfig& encoder,
                                  const AdaptationConfig& config);

struct EpochRecord {
  int epoch = 0;
  LossBundle mean;
  std::size_t steps = 0;
  double lr = 0.0;
  bool refreshed = false;
  double reliable_fraction = 0.0;
  std::size_t balanced_size = 0;
  std::optional<double> pseudo_label_accuracy;
  std::optional<double> target_accuracy;
};

struct RunRecord {
  std::string task;
  std::string config_hash;
  std::optional<double> source_only_accuracy;
  std::vector<EpochRecord> epochs;
  std::optional<double> final_accuracy;
  std::vector<std::vector<std::int64_t>> confusion;
  double wall_seconds = 0.0;
};

struct AdaptationResult {
  ModelState model;
  RunRecord record;
};

/// Target adaptation. The source model is not modified. With a non-empty
/// `run_dir`, per-step metrics go to `metrics.jsonl` and the RunRecord is
/// rewritten to `run_record.json` after every epoch.
AdaptationResult adapt_target(const ModelState& source, const DomainDataset& target, const AdaptationConfig& config,
                              const std::filesystem::path& run_dir = {});

/// Applies the determinism settings and seeds torch's global generator.
void seed_everything(const AdaptationConfig& config, std::uint64_t stream);

}  // namespace sdalr
