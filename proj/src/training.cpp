#include "sdalr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "sdalr/config.hpp"
#include "sdalr/error.hpp"
#include "sdalr/pseudo_labeler.hpp"

namespace sdalr {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void set_lr(torch::optim::SGD& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
}

torch::Tensor label_tensor(const std::vector<int>& labels) {
  auto t = torch::empty({static_cast<std::int64_t>(labels.size())}, torch::kLong);
  auto* p = t.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i];
  return t;
}

// Stratified split: the first ceil((1 - val) * n_c) shuffled members of each class train.
void stratified_split(const DomainDataset& data, double val_fraction, std::mt19937_64& rng,
                      std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.class_count()));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(*data[i].label)].push_back(i);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < members.size(); ++k) (k < members.size() - n_val ? train : val).push_back(members[k]);
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

void add_into(LossBundle& acc, const LossBundle& b) {
  acc.l_lsc += b.l_lsc;
  acc.l_uem += b.l_uem;
  acc.l_ent += b.l_ent;
  acc.l_div += b.l_div;
  acc.l_im += b.l_im;
  acc.l_car += b.l_car;
  acc.l_total += b.l_total;
  acc.reliable += b.reliable;
  acc.unreliable += b.unreliable;
}

}  // namespace

void AdaptationConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(alpha >= 0.0 && alpha < 1.0, "alpha must lie in [0, 1)");
  require(beta > 0.0, "beta must be positive");
  require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(source_lr > 0.0 && target_lr > 0.0, "learning rates must be positive");
  require(source_epochs >= 1 && target_epochs >= 1, "epoch counts must be positive");
  require(source_val_fraction >= 0.0 && source_val_fraction < 1.0, "source_val_fraction must lie in [0, 1)");
  require(momentum >= 0.0 && weight_decay >= 0.0, "momentum and weight decay must be non-negative");
  require(schedule_gamma >= 0.0 && schedule_power >= 0.0, "schedule parameters must be non-negative");
  require(refresh_every >= 0, "refresh_every must be >= 0 (0 labels once)");
  require(augmentation.zero_fraction > 0.0 && augmentation.zero_fraction < 1.0, "zero_fraction must lie in (0, 1)");
}

double scheduled_lr(double lr0, double progress, double gamma, double power) {
  return lr0 * std::pow(1.0 + gamma * progress, -power);
}

void seed_everything(const AdaptationConfig& config, std::uint64_t stream) {
  if (config.strict_determinism) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
  torch::manual_seed(mix(config.seed, stream));
}

std::vector<std::vector<double>> EvalResult::row_normalized() const {
  std::vector<std::vector<double>> out;
  for (const auto& row : confusion) {
    const double n = static_cast<double>(std::accumulate(row.begin(), row.end(), std::int64_t{0}));
    std::vector<double> r(row.size(), 0.0);
    for (std::size_t k = 0; k < row.size(); ++k) r[k] = n > 0 ? static_cast<double>(row[k]) / n : 0.0;
    out.push_back(std::move(r));
  }
  return out;
}

EvalResult evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int class_count) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("prediction count does not match labels");
  const auto C = static_cast<std::size_t>(class_count);
  EvalResult r;
  r.confusion.assign(C, std::vector<std::int64_t>(C, 0));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++r.confusion.at(static_cast<std::size_t>(truth[i])).at(static_cast<std::size_t>(predicted[i]));
    hit += truth[i] == predicted[i] ? 1 : 0;
  }
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
  r.per_class_accuracy.resize(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const auto n = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::int64_t{0});
    r.per_class_accuracy[c] = n > 0 ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(n) : 0.0;
  }
  return r;
}

std::vector<int> predict(ModelState& model, const DomainDataset& dataset) {
  const auto emb = embed(model, dataset);
  auto arg = emb.probs.argmax(1).contiguous();
  const auto* p = arg.data_ptr<std::int64_t>();
  return std::vector<int>(p, p + arg.numel());
}

EvalResult evaluate(ModelState& model, const DomainDataset& dataset) {
  if (dataset.class_count() != model.class_count()) {
    throw ConfigError("dataset has " + std::to_string(dataset.class_count()) + " classes but the model has " +
                      std::to_string(model.class_count()));
  }
  return evaluate_predictions(dataset.labels(), predict(model, dataset), dataset.class_count());
}

SourceTrainingResult train_source(const DomainDataset& dataset, const EncoderConfig& encoder,
                                  const AdaptationConfig& config) {
  config.validate();
  if (dataset.empty() || !dataset.labeled()) throw DataError("source training needs a labeled dataset");
  if (static_cast<int>(dataset.window_length()) != encoder.window_len) {
    throw ConfigError("source windows do not match the encoder window length");
  }
  seed_everything(config, 1);
  std::mt19937_64 rng(mix(config.seed, 11));

  std::vector<std::size_t> train_idx, val_idx;
  stratified_split(dataset, config.source_val_fraction, rng, train_idx, val_idx);

  SourceTrainingResult result{ModelState(encoder, dataset.class_count()), {}, 0.0, train_idx.size(), val_idx.size()};
  ModelState& model = result.model;
  model.meta.domain = dataset.domain_id();
  torch::optim::SGD opt(model.net()->parameters(), torch::optim::SGDOptions(config.source_lr)
                                                      .momentum(config.momentum)
                                                      .weight_decay(config.weight_decay));

  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (train_idx.size() + bs - 1) / bs;
  const double total_steps = static_cast<double>(batches) * config.source_epochs;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.source_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    model.train();
    for (std::size_t start = 0; start < train_idx.size(); start += bs, ++step) {
      const std::size_t end = std::min(train_idx.size(), start + bs);
      if (end - start < 2) continue;  // batch norm needs two rows
      std::vector<const Waveform*> ptrs;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        ptrs.push_back(&dataset[train_idx[k]].waveform);
        labels.push_back(*dataset[train_idx[k]].label);
      }
      set_lr(opt, scheduled_lr(config.source_lr, static_cast<double>(step) / total_steps, config.schedule_gamma,
                               config.schedule_power));
      opt.zero_grad();
      auto probs = forward_probs(model, to_batch(std::span<const Waveform* const>(ptrs)));
      auto loss = source_ce(probs, label_tensor(labels));
      const double value = loss.item<double>();
      if (!std::isfinite(value)) throw TrainingError("source loss diverged at step " + std::to_string(step));
      loss.backward();
      opt.step();
      result.loss_trace.push_back(value);
    }
    model.meta.epoch = epoch + 1;
  }
  model.eval();
  if (!val_idx.empty()) result.val_accuracy = evaluate(model, dataset.subset(val_idx)).accuracy;
  spdlog::info("source {}: {} train / {} val windows, validation accuracy {:.4f}", dataset.domain_id(),
               train_idx.size(), val_idx.size(), result.val_accuracy);
  return result;
}

AdaptationResult adapt_target(const ModelState& source, const DomainDataset& target, const AdaptationConfig& config,
                              const std::filesystem::path& run_dir) {
  config.validate();
  if (target.empty()) throw DataError("target dataset is empty");
  const auto started = std::chrono::steady_clock::now();
  seed_everything(config, 2);
  std::mt19937_64 rng(mix(config.seed, 21));

  AdaptationResult result{init_target_from_source(source, target.class_count()), {}};
  ModelState& model = result.model;
  RunRecord& record = result.record;
  record.config_hash =
      fnv1a_hex(nlohmann::json{{"encoder", model.encoder_config()}, {"adaptation", config}}.dump());
  record.task = source.meta.domain + "->" + target.domain_id();

  const std::optional<std::vector<int>> truth =
      target.labeled() ? std::optional<std::vector<int>>(target.labels()) : std::nullopt;
  if (truth) record.source_only_accuracy = evaluate(model, target).accuracy;

  std::vector<torch::Tensor> trainable;
  for (auto& p : model.net()->encoder->parameters()) trainable.push_back(p);
  if (config.freeze_classifier) {
    for (auto& p : model.net()->classifier->parameters()) p.set_requires_grad(false);
  } else {
    for (auto& p : model.net()->classifier->parameters()) trainable.push_back(p);
  }
  torch::optim::SGD opt(trainable, torch::optim::SGDOptions(config.target_lr)
                                       .momentum(config.momentum)
                                       .weight_decay(config.weight_decay));

  std::ofstream metrics;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    metrics.open(run_dir / "metrics.jsonl", std::ios::trunc);
  }

  const CarOptions car{config.beta, config.car_normalize};
  VotingOptions voting;
  voting.threshold = config.threshold;
  voting.voting = config.voting;
  voting.augmentation = config.augmentation;

  PseudoLabelAssignment assignment;
  BalancedTargetSet balanced;
  std::vector<std::size_t> order;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::size_t global_step = 0;

  for (int epoch = 0; epoch < config.target_epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch + 1;
    const bool refresh = epoch == 0 || (config.refresh_every > 0 && epoch % config.refresh_every == 0);
    if (refresh) {
      voting.seed = mix(config.seed, 1000 + static_cast<std::uint64_t>(epoch));
      assignment = assign_labels(model, target, voting);
      balanced = rebalance(target, assignment, config.augmentation, rng);
      order.clear();
      for (std::size_t i = 0; i < balanced.entries.size(); ++i) {
        // Without the unreliable-entropy term unreliable samples feed no loss.
        if (config.losses.uem || balanced.entries[i].label != kUnreliable) order.push_back(i);
      }
    }
    er.refreshed = refresh;
    er.reliable_fraction = static_cast<double>(assignment.reliable_count()) / static_cast<double>(target.size());
    er.balanced_size = order.size();
    if (truth) er.pseudo_label_accuracy = assignment.reliable_accuracy(*truth);

    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t batches = (order.size() + bs - 1) / bs;
    model.train();
    for (std::size_t b = 0; b < batches; ++b, ++global_step) {
      const std::size_t start = b * bs;
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) continue;
      std::vector<const Waveform*> ptrs;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        ptrs.push_back(&balanced.entries[order[k]].waveform);
        labels.push_back(balanced.entries[order[k]].label);
      }
      const double progress = (epoch + static_cast<double>(b) / static_cast<double>(batches)) / config.target_epochs;
      const double lr = scheduled_lr(config.target_lr, progress, config.schedule_gamma, config.schedule_power);
      set_lr(opt, lr);

      opt.zero_grad();
      auto features = forward_features(model, to_batch(std::span<const Waveform* const>(ptrs)));
      auto probs = classify_features(model, features);
      auto loss = total_loss(probs, features, label_tensor(labels), config.alpha, car, config.losses);
      if (!std::isfinite(loss.bundle.l_total)) {
        throw TrainingError("adaptation loss diverged at epoch " + std::to_string(epoch + 1));
      }
      loss.total.backward();
      opt.step();

      add_into(er.mean, loss.bundle);
      ++er.steps;
      er.lr = lr;
      if (metrics.is_open()) {
        nlohmann::json line = loss.bundle;
        line["epoch"] = epoch + 1;
        line["step"] = global_step;
        line["lr"] = lr;
        metrics << line.dump() << '\n';
      }
    }
    metrics.flush();
    if (er.steps > 0) {
      const double n = static_cast<double>(er.steps);
      er.mean = combine_losses(er.mean.l_lsc / n, er.mean.l_uem / n, er.mean.l_ent / n, er.mean.l_div / n,
                               er.mean.l_car / n);
      er.mean.reliable = 0;
      er.mean.unreliable = 0;
    }
    for (const auto& e : balanced.entries) (e.label == kUnreliable ? er.mean.unreliable : er.mean.reliable)++;
    if (truth) er.target_accuracy = evaluate(model, target).accuracy;
    spdlog::info("epoch {}/{}: loss {:.4f}, reliable {:.3f}, pseudo acc {}, target acc {}", er.epoch,
                 config.target_epochs, er.mean.l_total, er.reliable_fraction,
                 er.pseudo_label_accuracy ? std::to_string(*er.pseudo_label_accuracy) : "n/a",
                 er.target_accuracy ? std::to_string(*er.target_accuracy) : "n/a");
    record.epochs.push_back(er);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!run_dir.empty()) write_json_file(run_dir / "run_record.json", record);
  }

  model.eval();
  model.meta.epoch = config.target_epochs;
  model.meta.domain = target.domain_id();
  if (truth) {
    const auto final_eval = evaluate(model, target);
    record.final_accuracy = final_eval.accuracy;
    record.confusion = final_eval.confusion;
  }
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!run_dir.empty()) write_json_file(run_dir / "run_record.json", record);
  return result;
}

}  // namespace sdalr
