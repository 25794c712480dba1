#include "driu/loss.hpp"

#include <cmath>

#include "driu/nn_ops.hpp"

namespace driu {

namespace {

template <typename T>
void check_map(const BasicTensor<T>& map, const Mask& mask, const char* what) {
  if (map.shape() != Shape{1, mask.height(), mask.width()}) {
    throw ShapeError(std::string(what) + " shape " + shape_to_string(map.shape()) + " does not match mask (1," +
                     std::to_string(mask.height()) + "," + std::to_string(mask.width()) + ")");
  }
}

}  // namespace

double class_balance_beta(const Mask& mask) {
  const std::size_t total = mask.size();
  const std::size_t background = total - mask.count_foreground();
  return static_cast<double>(background) / static_cast<double>(total);
}

double log_sigmoid(double a) noexcept {
  if (a >= 0.0) return -std::log1p(std::exp(-a));
  return a - std::log1p(std::exp(a));
}

template <typename T>
LossTerms balanced_bce_loss(const BasicTensor<T>& activation, const Mask& mask) {
  check_map(activation, mask, "activation");
  LossTerms terms;
  terms.beta = class_balance_beta(mask);
  terms.per_pixel = Tensor64(activation.shape());
  const double pos_weight = terms.beta, neg_weight = 1.0 - terms.beta;
  double total = 0.0;
  for (std::size_t j = 0; j < activation.size(); ++j) {
    const double a = static_cast<double>(activation[j]);
    // log(1 - sigmoid(a)) == log_sigmoid(-a)
    const double term = mask[j] ? -pos_weight * log_sigmoid(a) : -neg_weight * log_sigmoid(-a);
    terms.per_pixel[j] = term;
    total += term;
  }
  terms.total = total;
  return terms;
}

LossTerms balanced_bce_loss_from_probability(const Tensor64& probability, const Mask& mask) {
  check_map(probability, mask, "probability");
  LossTerms terms;
  terms.beta = class_balance_beta(mask);
  terms.per_pixel = Tensor64(probability.shape());
  double total = 0.0;
  for (std::size_t j = 0; j < probability.size(); ++j) {
    const double p = probability[j];
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("probability outside (0,1) at index " + std::to_string(j));
    const double term = mask[j] ? -terms.beta * std::log(p) : -(1.0 - terms.beta) * std::log1p(-p);
    terms.per_pixel[j] = term;
    total += term;
  }
  terms.total = total;
  return terms;
}

template <typename T>
BasicTensor<T> balanced_bce_grad(const BasicTensor<T>& activation, const Mask& mask) {
  check_map(activation, mask, "activation");
  const double beta = class_balance_beta(mask);
  BasicTensor<T> grad(activation.shape());
  for (std::size_t j = 0; j < activation.size(); ++j) {
    const double p = sigmoid(static_cast<double>(activation[j]));
    grad[j] = static_cast<T>(mask[j] ? -beta * (1.0 - p) : (1.0 - beta) * p);
  }
  return grad;
}

template LossTerms balanced_bce_loss<float>(const Tensor&, const Mask&);
template LossTerms balanced_bce_loss<double>(const Tensor64&, const Mask&);
template Tensor balanced_bce_grad<float>(const Tensor&, const Mask&);
template Tensor64 balanced_bce_grad<double>(const Tensor64&, const Mask&);

}  // namespace driu
