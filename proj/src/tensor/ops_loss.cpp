#include <cmath>

#include "op_common.hpp"

namespace sdh::tensor {

namespace {

template <typename T>
T softplus(T t) {
  return std::max(t, T(0)) + std::log1p(std::exp(-std::abs(t)));
}

}  // namespace

// mean over elements of  pw*y*softplus(-z) + (1-y)*softplus(z)
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets,
                          T pos_weight) {
  check_same_shape(logits.shape(), targets.shape(), "bce_with_logits");
  const int64_t n = logits.numel();
  const T* pz = logits.data().data();
  const T* py = targets.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    acc += pos_weight * py[i] * softplus(-pz[i]) +
           (T(1) - py[i]) * softplus(pz[i]);
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  if (grad_enabled<T>({&logits})) {
    loss.set_requires_grad(true);
    Tape<T>::active()->record([logits, targets, loss, pos_weight, n]() mutable {
      if (!loss.has_grad() || !logits.requires_grad()) return;
      const T g = loss.grad()[0];
      const T* pz = logits.data().data();
      const T* py = targets.data().data();
      auto gz = logits.grad();
      const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        const T sig = T(1) / (T(1) + std::exp(-pz[i]));
        gz[i] += g * inv_n *
                 (pos_weight * py[i] * (sig - T(1)) + (T(1) - py[i]) * sig);
      }
    });
  }
  return loss;
}

// mean of -[g log p + (1-g) log(1-p)] with probabilities clamped away from
// the log singularities
template <typename T>
Tensor<T> bce_probs(const Tensor<T>& probs, const Tensor<T>& targets) {
  check_same_shape(probs.shape(), targets.shape(), "bce_probs");
  const T clamp = T(1e-12);
  const int64_t n = probs.numel();
  const T* pp = probs.data().data();
  const T* pg = targets.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    T p = std::min(std::max(pp[i], clamp), T(1) - clamp);
    acc -= pg[i] * std::log(p) + (T(1) - pg[i]) * std::log(T(1) - p);
  }
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  if (grad_enabled<T>({&probs})) {
    loss.set_requires_grad(true);
    Tape<T>::active()->record([probs, targets, loss, clamp, n]() mutable {
      if (!loss.has_grad() || !probs.requires_grad()) return;
      const T g = loss.grad()[0];
      const T* pp = probs.data().data();
      const T* pg = targets.data().data();
      auto gp = probs.grad();
      const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        if (pp[i] <= clamp || pp[i] >= T(1) - clamp) continue;  // clamped flat
        gp[i] += g * inv_n * (-pg[i] / pp[i] + (T(1) - pg[i]) / (T(1) - pp[i]));
      }
    });
  }
  return loss;
}

// 1 - 2*sum(p*g) / (sum(p^2) + sum(g^2) + eps)
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& targets, T eps) {
  check_same_shape(probs.shape(), targets.shape(), "dice_loss");
  const int64_t n = probs.numel();
  const T* pp = probs.data().data();
  const T* pg = targets.data().data();
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    inter += static_cast<double>(pp[i]) * pg[i];
    sp += static_cast<double>(pp[i]) * pp[i];
    sg += static_cast<double>(pg[i]) * pg[i];
  }
  const double denom = sp + sg + static_cast<double>(eps);
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(1.0 - 2.0 * inter / denom));
  if (grad_enabled<T>({&probs})) {
    loss.set_requires_grad(true);
    Tape<T>::active()->record([probs, targets, loss, inter, denom, n]() mutable {
      if (!loss.has_grad() || !probs.requires_grad()) return;
      const T g = loss.grad()[0];
      const T* pp = probs.data().data();
      const T* pg = targets.data().data();
      auto gp = probs.grad();
      const double inv_d2 = 1.0 / (denom * denom);
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        // d/dp_i of -2*inter/denom
        double d = -2.0 * (static_cast<double>(pg[i]) * denom -
                           inter * 2.0 * static_cast<double>(pp[i])) * inv_d2;
        gp[i] += g * static_cast<T>(d);
      }
    });
  }
  return loss;
}

#define SDH_LOSS_INST(T)                                                       \
  template Tensor<T> bce_with_logits<T>(const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> bce_probs<T>(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> dice_loss<T>(const Tensor<T>&, const Tensor<T>&, T);

SDH_INSTANTIATE_OPS(SDH_LOSS_INST)

}  // namespace sdh::tensor
