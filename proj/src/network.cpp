#include "sdalr/network.hpp"

#include <cstring>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sdalr/error.hpp"

namespace sdalr {

namespace nn = torch::nn;

BasicBlock1dImpl::BasicBlock1dImpl(int in_channels, int out_channels, int stride,
                                   const EncoderConfig& cfg) {
  auto bn = [&](int ch) {
    return nn::BatchNorm1d(nn::BatchNorm1dOptions(ch).eps(cfg.bn_eps).momentum(cfg.bn_momentum));
  };
  conv1_ = register_module(
      "conv1", nn::Conv1d(nn::Conv1dOptions(in_channels, out_channels, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", bn(out_channels));
  conv2_ = register_module(
      "conv2", nn::Conv1d(nn::Conv1dOptions(out_channels, out_channels, 3).stride(1).padding(1).bias(false)));
  bn2_ = register_module("bn2", bn(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = register_module(
        "shortcut",
        nn::Sequential(nn::Conv1d(nn::Conv1dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       bn(out_channels)));
  }
}

torch::Tensor BasicBlock1dImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_->forward(conv1_->forward(x)));
  out = bn2_->forward(conv2_->forward(out));
  auto identity = shortcut_ ? shortcut_->forward(x) : x;
  return torch::relu(out + identity);
}

Encoder1dImpl::Encoder1dImpl(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.base_channels < 1 || cfg.feature_dim < 1 || cfg.window_len < 16) {
    throw ConfigError("invalid encoder configuration");
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  const int base = cfg.base_channels;
  stem_conv_ = register_module(
      "stem_conv", nn::Conv1d(nn::Conv1dOptions(cfg.in_channels, base, 7).stride(2).padding(3).bias(false)));
  stem_bn_ = register_module(
      "stem_bn", nn::BatchNorm1d(nn::BatchNorm1dOptions(base).eps(cfg.bn_eps).momentum(cfg.bn_momentum)));

  const int widths[4] = {base, base * 2, base * 4, base * 8};
  const int strides[4] = {1, 2, 2, 2};
  int in = base;
  for (int s = 0; s < 4; ++s) {
    nn::Sequential stage(BasicBlock1d(in, widths[s], strides[s], cfg), BasicBlock1d(widths[s], widths[s], 1, cfg));
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
    in = widths[s];
  }
  dropout_ = register_module("dropout", nn::Dropout(cfg.dropout));
  bottleneck_ = register_module("bottleneck", nn::Linear(in, cfg.feature_dim));
  bottleneck_bn_ = register_module(
      "bottleneck_bn",
      nn::BatchNorm1d(nn::BatchNorm1dOptions(cfg.feature_dim).eps(cfg.bn_eps).momentum(cfg.bn_momentum)));
}

torch::Tensor Encoder1dImpl::prepare(torch::Tensor x) const {
  if (x.dim() == 2) x = x.unsqueeze(1);
  if (x.dim() != 3 || x.size(1) != cfg_.in_channels || x.size(2) != cfg_.window_len) {
    std::ostringstream msg;
    msg << "shape error: expected [B, " << cfg_.window_len << "] input, got " << x.sizes();
    throw std::invalid_argument(msg.str());
  }
  return x.to(stem_conv_->weight.scalar_type());
}

torch::Tensor Encoder1dImpl::forward(torch::Tensor x) {
  x = prepare(std::move(x));
  // No max-pool after the stem; stride 2 here and in three stages gives L/16.
  x = torch::relu(stem_bn_->forward(stem_conv_->forward(x)));
  for (auto& stage : stages_) x = stage->forward(x);
  x = x.mean(-1);
  x = dropout_->forward(x);
  return bottleneck_bn_->forward(bottleneck_->forward(x));
}

std::vector<std::int64_t> Encoder1dImpl::stage_lengths(torch::Tensor x) {
  torch::NoGradGuard no_grad;
  x = prepare(std::move(x));
  std::vector<std::int64_t> lengths;
  x = torch::relu(stem_bn_->forward(stem_conv_->forward(x)));
  lengths.push_back(x.size(-1));
  for (auto& stage : stages_) {
    x = stage->forward(x);
    lengths.push_back(x.size(-1));
  }
  return lengths;
}

WeightNormLinearImpl::WeightNormLinearImpl(int in_features, int out_features) {
  auto init = torch::empty({out_features, in_features});
  nn::init::kaiming_uniform_(init, std::sqrt(5.0));
  direction = register_parameter("direction", init);
  magnitude = register_parameter("magnitude", init.norm(2, 1).detach().clone());
  bias = register_parameter("bias", torch::zeros({out_features}));
}

torch::Tensor WeightNormLinearImpl::effective_weight() const {
  return magnitude.unsqueeze(1) * direction / direction.norm(2, 1, true);
}

torch::Tensor WeightNormLinearImpl::forward(const torch::Tensor& x) {
  return torch::nn::functional::linear(x, effective_weight(), bias);
}

SdalrNetImpl::SdalrNetImpl(const EncoderConfig& cfg, int class_count) {
  if (class_count < 2) throw ConfigError("class count must be at least 2");
  encoder = register_module("encoder", Encoder1d(cfg));
  classifier = register_module("classifier", WeightNormLinear(cfg.feature_dim, class_count));
}

ModelState::ModelState(const EncoderConfig& cfg, int class_count)
    : cfg_(cfg), class_count_(class_count), net_(cfg, class_count) {}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

namespace {

nlohmann::json arch_json(const EncoderConfig& c, int class_count) {
  return {{"in_channels", c.in_channels}, {"base_channels", c.base_channels},
          {"window_len", c.window_len},   {"feature_dim", c.feature_dim},
          {"dropout", c.dropout},         {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum}, {"class_count", class_count}};
}

void copy_state(const SdalrNet& from, SdalrNet& to) {
  torch::NoGradGuard no_grad;
  auto dst_params = to->named_parameters(true);
  for (const auto& p : from->named_parameters(true)) dst_params[p.key()].copy_(p.value());
  auto dst_buffers = to->named_buffers(true);
  for (const auto& b : from->named_buffers(true)) dst_buffers[b.key()].copy_(b.value());
}

}  // namespace

std::string ModelState::config_hash() const { return fnv1a_hex(arch_json(cfg_, class_count_).dump()); }

ModelState ModelState::clone() const {
  ModelState copy(cfg_, class_count_);
  copy_state(net_, copy.net_);
  for (const auto& p : net_->named_parameters(true)) {
    copy.net_->named_parameters(true)[p.key()].set_requires_grad(p.value().requires_grad());
  }
  copy.net_->train(net_->is_training());
  copy.meta = meta;
  return copy;
}

torch::Tensor to_batch(std::span<const Waveform* const> waveforms) {
  if (waveforms.empty()) return torch::empty({0, 0});
  const auto L = static_cast<std::int64_t>(waveforms.front()->size());
  auto out = torch::empty({static_cast<std::int64_t>(waveforms.size()), L});
  auto* dst = out.data_ptr<float>();
  for (const auto* w : waveforms) {
    if (static_cast<std::int64_t>(w->size()) != L) throw std::invalid_argument("shape error: ragged batch");
    std::memcpy(dst, w->data(), w->size() * sizeof(float));
    dst += L;
  }
  return out;
}

torch::Tensor to_batch(const std::vector<Waveform>& waveforms) {
  std::vector<const Waveform*> ptrs;
  ptrs.reserve(waveforms.size());
  for (const auto& w : waveforms) ptrs.push_back(&w);
  return to_batch(std::span<const Waveform* const>(ptrs));
}

torch::Tensor forward_features(ModelState& model, const torch::Tensor& batch) {
  return model.net()->encoder->forward(batch);
}

torch::Tensor classify_features(ModelState& model, const torch::Tensor& features) {
  return torch::softmax(model.net()->classifier->forward(features), 1);
}

torch::Tensor forward_probs(ModelState& model, const torch::Tensor& batch) {
  return classify_features(model, forward_features(model, batch));
}

ModelState init_target_from_source(const ModelState& source, int target_class_count) {
  if (source.class_count() != target_class_count) {
    throw ConfigError("source model has " + std::to_string(source.class_count()) +
                      " classes but the target has " + std::to_string(target_class_count));
  }
  return source.clone();
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  nlohmann::json meta = {{"architecture", arch_json(model.encoder_config(), model.class_count())},
                         {"config_hash", model.config_hash()},
                         {"class_count", model.class_count()},
                         {"dataset", model.meta.dataset},
                         {"domain", model.meta.domain},
                         {"epoch", model.meta.epoch}};
  const std::string text = meta.dump();
  torch::serialize::OutputArchive archive;
  auto blob = torch::empty({static_cast<std::int64_t>(text.size())}, torch::kChar);
  std::memcpy(blob.data_ptr<std::int8_t>(), text.data(), text.size());
  archive.write("meta", blob, /*is_buffer=*/true);
  for (const auto& p : model.net()->named_parameters(true)) archive.write("param/" + p.key(), p.value());
  for (const auto& b : model.net()->named_buffers(true)) {
    archive.write("buffer/" + b.key(), b.value(), /*is_buffer=*/true);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, const std::optional<EncoderConfig>& expected,
                           std::optional<int> expected_classes) {
  if (!std::filesystem::is_regular_file(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  torch::Tensor blob;
  if (!archive.try_read("meta", blob)) throw DataError("checkpoint has no metadata: " + path.string());
  std::string text(static_cast<std::size_t>(blob.numel()), '\0');
  std::memcpy(text.data(), blob.data_ptr<std::int8_t>(), text.size());
  const auto meta = nlohmann::json::parse(text);

  const auto& a = meta.at("architecture");
  EncoderConfig cfg;
  cfg.in_channels = a.at("in_channels");
  cfg.base_channels = a.at("base_channels");
  cfg.window_len = a.at("window_len");
  cfg.feature_dim = a.at("feature_dim");
  cfg.dropout = a.at("dropout");
  cfg.bn_eps = a.at("bn_eps");
  cfg.bn_momentum = a.at("bn_momentum");
  const int classes = meta.at("class_count");

  if (expected && !(*expected == cfg)) {
    throw ConfigError("checkpoint " + path.string() + " architecture does not match the configured encoder");
  }
  if (expected_classes && *expected_classes != classes) {
    throw ConfigError("checkpoint " + path.string() + " has " + std::to_string(classes) + " classes, expected " +
                      std::to_string(*expected_classes));
  }

  ModelState model(cfg, classes);
  if (model.config_hash() != meta.at("config_hash").get<std::string>()) {
    throw ConfigError("checkpoint " + path.string() + " config hash mismatch");
  }
  torch::NoGradGuard no_grad;
  for (auto& p : model.net()->named_parameters(true)) {
    torch::Tensor t;
    if (!archive.try_read("param/" + p.key(), t)) throw DataError("checkpoint missing parameter " + p.key());
    p.value().copy_(t);
  }
  for (auto& b : model.net()->named_buffers(true)) {
    torch::Tensor t;
    if (!archive.try_read("buffer/" + b.key(), t)) throw DataError("checkpoint missing buffer " + b.key());
    b.value().copy_(t);
  }
  model.meta.dataset = meta.value("dataset", "");
  model.meta.domain = meta.value("domain", "");
  model.meta.epoch = meta.value("epoch", 0);
  model.eval();
  return model;
}

}  // namespace sdalr
