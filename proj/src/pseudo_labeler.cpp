#include "sdalr/pseudo_labeler.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "sdalr/error.hpp"

namespace sdalr {

PrototypeSet compute_prototypes(const torch::Tensor& features, const torch::Tensor& probs) {
  if (features.dim() != 2 || probs.dim() != 2 || features.size(0) != probs.size(0) || features.size(0) < 1) {
    throw std::invalid_argument("compute_prototypes expects [N, D] features and [N, C] probabilities, N >= 1");
  }
  auto f = features.detach().to(torch::kDouble);
  auto p = probs.detach().to(torch::kDouble);
  auto weighted = p.t().matmul(f);  // [C, D]
  auto mass = p.sum(0);             // [C]

  PrototypeSet set;
  const auto C = p.size(1);
  set.mass.resize(static_cast<std::size_t>(C));
  set.empty.resize(static_cast<std::size_t>(C));
  auto mass_acc = mass.accessor<double, 1>();
  auto denom = mass.clone();
  for (std::int64_t c = 0; c < C; ++c) {
    const auto k = static_cast<std::size_t>(c);
    set.mass[k] = mass_acc[c];
    set.empty[k] = mass_acc[c] < PrototypeSet::kEmptyMass;
    if (set.empty[k]) denom[c] = 1.0;
  }
  set.centers = weighted / denom.unsqueeze(1);
  for (std::int64_t c = 0; c < C; ++c) {
    if (set.empty[static_cast<std::size_t>(c)]) set.centers[c].zero_();
  }
  return set;
}

InitialLabel initial_label(std::span<const double> feature, const PrototypeSet& prototypes, double threshold) {
  const auto D = static_cast<std::size_t>(prototypes.feature_dim());
  if (feature.size() != D) throw std::invalid_argument("feature dimension does not match prototypes");
  double fnorm = 0.0;
  for (double v : feature) fnorm += v * v;
  fnorm = std::sqrt(fnorm);
  if (fnorm == 0.0) {
    spdlog::warn("zero-norm feature has no defined cosine similarity; marked unreliable");
    return {};
  }

  auto centers = prototypes.centers.contiguous();
  const double* eta = centers.data_ptr<double>();
  InitialLabel best;
  bool any = false;
  for (std::int64_t c = 0; c < prototypes.class_count(); ++c) {
    if (prototypes.empty[static_cast<std::size_t>(c)]) continue;
    const double* row = eta + static_cast<std::size_t>(c) * D;
    double dot = 0.0, enorm = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      dot += feature[d] * row[d];
      enorm += row[d] * row[d];
    }
    if (enorm == 0.0) continue;
    const double s = dot / (fnorm * std::sqrt(enorm));
    if (!any || s > best.top_similarity) {
      best.top_similarity = s;
      best.label = static_cast<int>(c);
      any = true;
    }
  }
  if (!any) return {};
  if (!(best.top_similarity > threshold)) best.label = kUnreliable;
  return best;
}

std::vector<InitialLabel> initial_labels(const torch::Tensor& features, const PrototypeSet& prototypes,
                                         double threshold) {
  auto f = features.detach().to(torch::kDouble).contiguous();
  const auto N = f.size(0);
  const auto D = static_cast<std::size_t>(f.size(1));
  std::vector<InitialLabel> out(static_cast<std::size_t>(N));
  const double* base = f.data_ptr<double>();
  for (std::int64_t i = 0; i < N; ++i) {
    out[static_cast<std::size_t>(i)] =
        initial_label(std::span<const double>(base + static_cast<std::size_t>(i) * D, D), prototypes, threshold);
  }
  return out;
}

int vote(std::span<const int> ballots) {
  if (ballots.empty()) return kUnreliable;
  const std::size_t m = ballots.size();
  for (std::size_t i = 0; i < m; ++i) {
    if (ballots[i] == kUnreliable) continue;
    const auto count = static_cast<std::size_t>(std::count(ballots.begin(), ballots.end(), ballots[i]));
    // A strict majority is unique, so the first class that reaches it wins.
    if (2 * count > m) return ballots[i];
  }
  return kUnreliable;
}

std::size_t PseudoLabelAssignment::reliable_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != kUnreliable; }));
}

std::optional<double> PseudoLabelAssignment::reliable_accuracy(const std::vector<int>& truth) const {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < labels.size() && i < truth.size(); ++i) {
    if (labels[i] == kUnreliable) continue;
    ++total;
    hit += labels[i] == truth[i] ? 1 : 0;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

Embedding embed(ModelState& model, const std::vector<const Waveform*>& waveforms, std::size_t batch_size) {
  EvalGuard eval(model);
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> feats, probs;
  for (std::size_t start = 0; start < waveforms.size(); start += batch_size) {
    const std::size_t end = std::min(waveforms.size(), start + batch_size);
    auto batch = to_batch(std::span<const Waveform* const>(waveforms.data() + start, end - start));
    auto f = forward_features(model, batch);
    probs.push_back(classify_features(model, f).to(torch::kDouble));
    feats.push_back(f.to(torch::kDouble));
  }
  if (feats.empty()) {
    return {torch::empty({0, model.encoder_config().feature_dim}, torch::kDouble),
            torch::empty({0, model.class_count()}, torch::kDouble)};
  }
  return {torch::cat(feats), torch::cat(probs)};
}

Embedding embed(ModelState& model, const DomainDataset& data, std::size_t batch_size) {
  std::vector<const Waveform*> ptrs;
  ptrs.reserve(data.size());
  for (const auto& s : data.samples()) ptrs.push_back(&s.waveform);
  return embed(model, ptrs, batch_size);
}

PseudoLabelAssignment assign_labels(ModelState& model, const DomainDataset& target, const VotingOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw ConfigError("similarity threshold must lie in (0, 1)");
  }
  const std::size_t N = target.size();
  const Embedding base = embed(model, target, options.batch_size);

  PseudoLabelAssignment out;
  out.prototypes = compute_prototypes(base.features, base.probs);
  const auto original = initial_labels(base.features, out.prototypes, options.threshold);

  out.ballots_per_sample = options.voting ? 4 : 1;
  out.ballots.assign(N * out.ballots_per_sample, kUnreliable);
  out.top_similarity.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    out.ballots[i * out.ballots_per_sample] = original[i].label;
    out.top_similarity[i] = original[i].top_similarity;
  }

  if (options.voting) {
    std::mt19937_64 rng(options.seed);
    for (std::size_t start = 0; start < N; start += options.batch_size) {
      const std::size_t end = std::min(N, start + options.batch_size);
      std::vector<Waveform> variants;
      variants.reserve((end - start) * 3);
      for (std::size_t i = start; i < end; ++i) {
        auto set = build_augmented_set(target[i], options.augmentation, rng);
        for (auto& [kind, w] : set.variants) variants.push_back(std::move(w));
      }
      std::vector<const Waveform*> ptrs;
      for (const auto& w : variants) ptrs.push_back(&w);
      const auto emb = embed(model, ptrs, options.batch_size);
      const auto labels = initial_labels(emb.features, out.prototypes, options.threshold);
      for (std::size_t i = start; i < end; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
          out.ballots[i * 4 + 1 + k] = labels[(i - start) * 3 + k].label;
        }
      }
    }
  }

  out.labels.resize(N);
  for (std::size_t i = 0; i < N; ++i) out.labels[i] = vote(out.ballots_of(i));
  return out;
}

std::vector<std::size_t> BalancedTargetSet::class_counts(int class_count) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
  for (const auto& e : entries) {
    if (e.label != kUnreliable) ++counts[static_cast<std::size_t>(e.label)];
  }
  return counts;
}

std::size_t BalancedTargetSet::unreliable_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.label == kUnreliable; }));
}

std::size_t BalancedTargetSet::duplicate_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.is_duplicate; }));
}

BalancedTargetSet rebalance(const DomainDataset& target, const PseudoLabelAssignment& labels,
                            const AugmentationParams& params, std::mt19937_64& rng) {
  return rebalance(target, std::span<const int>(labels.labels), params, rng);
}

BalancedTargetSet rebalance(const DomainDataset& target, std::span<const int> labels,
                            const AugmentationParams& params, std::mt19937_64& rng) {
  if (labels.size() != target.size()) throw std::invalid_argument("label vector does not match target size");
  const auto C = static_cast<std::size_t>(target.class_count());
  std::vector<std::vector<std::size_t>> members(C);
  std::vector<std::size_t> unreliable;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnreliable) {
      unreliable.push_back(i);
    } else {
      members.at(static_cast<std::size_t>(labels[i])).push_back(i);
    }
  }
  std::size_t largest = 0;
  for (const auto& m : members) largest = std::max(largest, m.size());
  if (largest == 0) throw TrainingError("no reliable pseudo-labels; lower the similarity threshold");

  BalancedTargetSet out;
  for (std::size_t c = 0; c < C; ++c) {
    for (auto i : members[c]) out.entries.push_back({target[i].waveform, static_cast<int>(c), false, std::nullopt, i});
  }
  std::uniform_int_distribution<int> pick_kind(0, 2);
  for (std::size_t c = 0; c < C; ++c) {
    if (members[c].empty()) {
      out.warnings.push_back("class " + std::to_string(c) + " has no reliable samples to duplicate");
      spdlog::warn("rebalance: {}", out.warnings.back());
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick_member(0, members[c].size() - 1);
    for (std::size_t n = members[c].size(); n < largest; ++n) {
      const auto i = members[c][pick_member(rng)];
      const auto kind = static_cast<AugmentationKind>(pick_kind(rng));
      out.entries.push_back({augment(kind, target[i].waveform, params, rng), static_cast<int>(c), true, kind, i});
    }
  }
  for (auto i : unreliable) out.entries.push_back({target[i].waveform, kUnreliable, false, std::nullopt, i});
  return out;
}

}  // namespace sdalr
