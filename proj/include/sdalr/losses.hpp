#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace sdalr {

/// Floor applied to every probability before taking a log.
inline constexpr double kLogEps = 1e-12;

// Conventions for every loss below:
//  - probs: [B, C] rows on the simplex.
//  - pseudo: [B] int64 pseudo-labels, kUnreliable (-1) for unreliable rows.
//  - reductions are means over the contributing rows; a loss with no
//    contributing rows returns an exact 0 that still participates in autograd.

/// Throws std::invalid_argument unless every entry lies in {-1} or [0, C).
void check_pseudo_labels(const torch::Tensor& pseudo, std::int64_t class_count);

/// Mean negative log-probability of the true class.
torch::Tensor source_ce(const torch::Tensor& probs, const torch::Tensor& labels);

/// (1 - alpha) * one_hot + alpha / C. Labels must all be reliable.
torch::Tensor smooth_targets(const torch::Tensor& labels, std::int64_t class_count, double alpha);

/// Label-smoothed cross-entropy over reliable rows.
torch::Tensor lsc_loss(const torch::Tensor& probs, const torch::Tensor& pseudo, double alpha);

/// Mean of sum_c p log p over unreliable rows (negative entropy; minimising it
/// pushes those rows toward uniform).
torch::Tensor uem_loss(const torch::Tensor& probs, const torch::Tensor& pseudo);

struct ImTerms {
  torch::Tensor ent;  ///< mean entropy of reliable rows
  torch::Tensor div;  ///< sum_c pbar log pbar, pbar = mean reliable row
};

ImTerms im_loss(const torch::Tensor& probs, const torch::Tensor& pseudo);

struct CarOptions {
  double beta = 0.6;
  /// L2-normalise features before the inner products.
  bool normalize = true;
};

/// Cohesion/repulsion objective per reliable anchor i:
///   sum_{j in S_i} <f_i, f_j> - beta * sum_{m in N_i} <f_i, f_m>
/// averaged over anchors. Returns the negated average, the quantity to minimise.
torch::Tensor car_loss(const torch::Tensor& features, const torch::Tensor& pseudo,
                       const CarOptions& options = {});

struct LossSwitches {
  bool lsc = true;
  bool im = true;
  bool uem = true;
  bool car = true;
};

/// Scalar summary of one batch. l_car holds the minimised (negated) form.
struct LossBundle {
  double l_lsc = 0, l_uem = 0, l_ent = 0, l_div = 0, l_im = 0, l_car = 0, l_total = 0;
  std::int64_t reliable = 0, unreliable = 0;
};

/// Equal-weight sum with l_im = l_ent + l_div.
LossBundle combine_losses(double l_lsc, double l_uem, double l_ent, double l_div, double l_car);

struct TargetLoss {
  torch::Tensor total;
  LossBundle bundle;
};

/// All enabled adaptation terms for one batch, summed with unit weights.
TargetLoss total_loss(const torch::Tensor& probs, const torch::Tensor& features, const torch::Tensor& pseudo,
                      double alpha, const CarOptions& car, const LossSwitches& switches = {});

}  // namespace sdalr
