#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdalr/signal.hpp"

namespace sdalr {

/// 1-D ResNet-18 style encoder. `base_channels` scales the four stage widths
/// (base, 2x, 4x, 8x); the reference architecture uses 64.
struct EncoderConfig {
  int in_channels = 1;
  int base_channels = 64;
  int window_len = 2048;
  int feature_dim = 256;
  double dropout = 0.1;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  bool operator==(const EncoderConfig&) const = default;
};

class BasicBlock1dImpl : public torch::nn::Module {
 public:
  BasicBlock1dImpl(int in_channels, int out_channels, int stride, const EncoderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv1d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm1d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock1d);

class Encoder1dImpl : public torch::nn::Module {
 public:
  explicit Encoder1dImpl(const EncoderConfig& cfg);

  /// [B, L] or [B, 1, L] -> [B, feature_dim].
  torch::Tensor forward(torch::Tensor x);
  /// Temporal lengths after the stem and after each residual stage.
  std::vector<std::int64_t> stage_lengths(torch::Tensor x);

  const EncoderConfig& config() const { return cfg_; }

 private:
  torch::Tensor prepare(torch::Tensor x) const;

  EncoderConfig cfg_;
  torch::nn::Conv1d stem_conv_{nullptr};
  torch::nn::BatchNorm1d stem_bn_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear bottleneck_{nullptr};
  torch::nn::BatchNorm1d bottleneck_bn_{nullptr};
};
TORCH_MODULE(Encoder1d);

/// Fully connected layer with weight = magnitude * direction / |direction|,
/// normalised per output row.
class WeightNormLinearImpl : public torch::nn::Module {
 public:
  WeightNormLinearImpl(int in_features, int out_features);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor effective_weight() const;

  torch::Tensor direction, magnitude, bias;
};
TORCH_MODULE(WeightNormLinear);

class SdalrNetImpl : public torch::nn::Module {
 public:
  SdalrNetImpl(const EncoderConfig& cfg, int class_count);

  Encoder1d encoder{nullptr};
  WeightNormLinear classifier{nullptr};
};
TORCH_MODULE(SdalrNet);

struct CheckpointMeta {
  std::string dataset;
  std::string domain;
  int epoch = 0;
};

/// Encoder + classifier with the metadata needed to refuse mismatched loads.
class ModelState {
 public:
  ModelState(const EncoderConfig& cfg, int class_count);
  // Move-only: copying would alias the underlying module. Use clone().
  ModelState(const ModelState&) = delete;
  ModelState& operator=(const ModelState&) = delete;
  ModelState(ModelState&&) = default;
  ModelState& operator=(ModelState&&) = default;

  const EncoderConfig& encoder_config() const { return cfg_; }
  int class_count() const { return class_count_; }
  /// Stable hash of the architecture (encoder config + class count).
  std::string config_hash() const;

  SdalrNet& net() { return net_; }
  const SdalrNet& net() const { return net_; }

  void train(bool on = true) { net_->train(on); }
  void eval() { net_->eval(); }
  bool is_training() const { return net_->is_training(); }

  /// Deep copy of parameters, buffers, mode and metadata.
  ModelState clone() const;

  CheckpointMeta meta;

 private:
  EncoderConfig cfg_;
  int class_count_;
  SdalrNet net_;
};

/// RAII switch to eval mode, restoring the previous mode on exit.
class EvalGuard {
 public:
  explicit EvalGuard(ModelState& model) : model_(model), was_training_(model.is_training()) {
    model_.eval();
  }
  ~EvalGuard() { model_.train(was_training_); }
  EvalGuard(const EvalGuard&) = delete;
  EvalGuard& operator=(const EvalGuard&) = delete;

 private:
  ModelState& model_;
  bool was_training_;
};

/// Stacks waveforms into a [B, L] float tensor.
torch::Tensor to_batch(std::span<const Waveform* const> waveforms);
torch::Tensor to_batch(const std::vector<Waveform>& waveforms);

/// [B, L] -> [B, feature_dim]. Throws std::invalid_argument on a length mismatch.
torch::Tensor forward_features(ModelState& model, const torch::Tensor& batch);
/// Softmax over the classifier logits: [B, L] -> [B, C].
torch::Tensor forward_probs(ModelState& model, const torch::Tensor& batch);
/// Classifier probabilities for precomputed features.
torch::Tensor classify_features(ModelState& model, const torch::Tensor& features);

/// Deep copy of a source model for adaptation. Throws if the source's class
/// count differs from the target's.
ModelState init_target_from_source(const ModelState& source, int target_class_count);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
/// Loads a checkpoint. When `expected` is given the stored architecture must match it.
ModelState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<EncoderConfig>& expected = std::nullopt,
                           std::optional<int> expected_classes = std::nullopt);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace sdalr
