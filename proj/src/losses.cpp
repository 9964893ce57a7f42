#include "sdalr/losses.hpp"

#include <stdexcept>
#include <string>

#include "sdalr/signal.hpp"

namespace sdalr {
namespace {

torch::Tensor safe_log(const torch::Tensor& p) { return torch::log(p.clamp_min(kLogEps)); }

// Zero that stays attached to the graph so callers can always backward().
torch::Tensor graph_zero(const torch::Tensor& like) { return like.sum() * 0.0; }

void check_probs(const torch::Tensor& probs) {
  if (probs.dim() != 2) throw std::invalid_argument("probabilities must be [B, C]");
}

}  // namespace

void check_pseudo_labels(const torch::Tensor& pseudo, std::int64_t class_count) {
  if (pseudo.dim() != 1) throw std::invalid_argument("pseudo-labels must be a vector");
  if (pseudo.numel() == 0) return;
  const auto lo = pseudo.min().item<std::int64_t>();
  const auto hi = pseudo.max().item<std::int64_t>();
  if (lo < kUnreliable || hi >= class_count) {
    throw std::invalid_argument("pseudo-label outside {-1} U [0, " + std::to_string(class_count) + ")");
  }
}

torch::Tensor source_ce(const torch::Tensor& probs, const torch::Tensor& labels) {
  check_probs(probs);
  if (labels.numel() != probs.size(0)) throw std::invalid_argument("label count does not match batch");
  if (labels.numel() > 0 && (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= probs.size(1))) {
    throw std::invalid_argument("label out of range [0, " + std::to_string(probs.size(1)) + ")");
  }
  auto picked = probs.gather(1, labels.to(torch::kLong).unsqueeze(1)).squeeze(1);
  return -safe_log(picked).mean();
}

torch::Tensor smooth_targets(const torch::Tensor& labels, std::int64_t class_count, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("smoothing alpha must lie in [0, 1)");
  if (labels.numel() > 0 && labels.min().item<std::int64_t>() < 0) {
    throw std::invalid_argument("smooth_targets received an unreliable (-1) label");
  }
  auto one_hot = torch::one_hot(labels.to(torch::kLong), class_count).to(torch::kDouble);
  return (1.0 - alpha) * one_hot + alpha / static_cast<double>(class_count);
}

torch::Tensor lsc_loss(const torch::Tensor& probs, const torch::Tensor& pseudo, double alpha) {
  check_probs(probs);
  auto mask = pseudo.ne(kUnreliable);
  if (!mask.any().item<bool>()) return graph_zero(probs);
  auto p = probs.index({mask});
  auto q = smooth_targets(pseudo.index({mask}), probs.size(1), alpha).to(probs.scalar_type());
  return -(q * safe_log(p)).sum(1).mean();
}

torch::Tensor uem_loss(const torch::Tensor& probs, const torch::Tensor& pseudo) {
  check_probs(probs);
  auto mask = pseudo.eq(kUnreliable);
  if (!mask.any().item<bool>()) return graph_zero(probs);
  auto p = probs.index({mask});
  return (p * safe_log(p)).sum(1).mean();
}

ImTerms im_loss(const torch::Tensor& probs, const torch::Tensor& pseudo) {
  check_probs(probs);
  auto mask = pseudo.ne(kUnreliable);
  if (!mask.any().item<bool>()) return {graph_zero(probs), graph_zero(probs)};
  auto p = probs.index({mask});
  auto ent = -(p * safe_log(p)).sum(1).mean();
  auto mean_p = p.mean(0);
  auto div = (mean_p * safe_log(mean_p)).sum();
  return {ent, div};
}

torch::Tensor car_loss(const torch::Tensor& features, const torch::Tensor& pseudo, const CarOptions& options) {
  if (features.dim() != 2) throw std::invalid_argument("features must be [B, D]");
  if (!(options.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  auto mask = pseudo.ne(kUnreliable);
  const auto reliable = mask.sum().item<std::int64_t>();
  if (reliable < 2) return graph_zero(features);

  auto f = features.index({mask});
  if (options.normalize) f = torch::nn::functional::normalize(f, torch::nn::functional::NormalizeFuncOptions().dim(1));
  auto labels = pseudo.index({mask});
  auto gram = f.matmul(f.t());
  auto same = labels.unsqueeze(0).eq(labels.unsqueeze(1));
  auto not_self = torch::eye(reliable, torch::TensorOptions().dtype(torch::kBool)).logical_not();
  auto weights = torch::where(same, torch::ones_like(gram), torch::full_like(gram, -options.beta)) *
                 not_self.to(gram.scalar_type());
  auto per_anchor = (gram * weights).sum(1);
  return -per_anchor.mean();
}

LossBundle combine_losses(double l_lsc, double l_uem, double l_ent, double l_div, double l_car) {
  LossBundle b;
  b.l_lsc = l_lsc;
  b.l_uem = l_uem;
  b.l_ent = l_ent;
  b.l_div = l_div;
  b.l_im = l_ent + l_div;
  b.l_car = l_car;
  b.l_total = b.l_lsc + b.l_uem + b.l_im + b.l_car;
  return b;
}

TargetLoss total_loss(const torch::Tensor& probs, const torch::Tensor& features, const torch::Tensor& pseudo,
                      double alpha, const CarOptions& car, const LossSwitches& switches) {
  auto zero = graph_zero(probs);
  auto l_lsc = switches.lsc ? lsc_loss(probs, pseudo, alpha) : zero;
  auto l_uem = switches.uem ? uem_loss(probs, pseudo) : zero;
  ImTerms im = switches.im ? im_loss(probs, pseudo) : ImTerms{zero, zero};
  auto l_car = switches.car ? car_loss(features, pseudo, car) : zero;

  TargetLoss out;
  out.total = l_lsc + l_uem + im.ent + im.div + l_car;
  out.bundle = combine_losses(l_lsc.item<double>(), l_uem.item<double>(), im.ent.item<double>(),
                              im.div.item<double>(), l_car.item<double>());
  out.bundle.reliable = pseudo.ne(kUnreliable).sum().item<std::int64_t>();
  out.bundle.unreliable = pseudo.numel() - out.bundle.reliable;
  return out;
}

}  // namespace sdalr
