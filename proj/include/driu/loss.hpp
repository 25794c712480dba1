#pragma once

#include "driu/mask.hpp"
#include "driu/tensor.hpp"

namespace driu {

/// beta = |Y-| / |Y|, the background fraction of the gold mask.
double class_balance_beta(const Mask& mask);

/// log(sigmoid(a)) without forming sigmoid(a) first.
double log_sigmoid(double a) noexcept;

struct LossTerms {
  double beta = 0.0;
  double total = 0.0;    // summed over pixels, not averaged
  Tensor64 per_pixel;    // (1,H,W) contribution of each pixel to `total`
};

/// Class-balanced cross entropy
///   L = -beta * sum_{Y+} log p_j - (1 - beta) * sum_{Y-} log(1 - p_j),
/// p = sigmoid(activation), evaluated in double through log-sigmoid so
/// saturated activations never take log(0).
template <typename T>
LossTerms balanced_bce_loss(const BasicTensor<T>& activation, const Mask& mask);

// Same objective from probabilities in (0,1); logs are taken in double.
LossTerms balanced_bce_loss_from_probability(const Tensor64& probability, const Mask& mask);

/// dL/da: -beta * (1 - sigmoid(a)) on foreground, (1 - beta) * sigmoid(a) on background.
template <typename T>
BasicTensor<T> balanced_bce_grad(const BasicTensor<T>& activation, const Mask& mask);

}  // namespace driu
