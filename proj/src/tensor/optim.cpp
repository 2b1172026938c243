#include "sdh/tensor/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sdh::tensor {

template <typename T>
void AdamW<T>::step(std::span<Parameter<T>> params) {
  for (auto& p : params) {
    if (!p.value.has_grad())
      throw std::runtime_error("adamw: parameter '" + p.name + "' has no gradient");
    const size_t n = static_cast<size_t>(p.value.numel());
    if (p.moment1.size() != n) {
      p.moment1.assign(n, T(0));
      p.moment2.assign(n, T(0));
    }
    p.steps++;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1),
                                                 static_cast<double>(p.steps)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2),
                                                 static_cast<double>(p.steps)));
    T* theta = p.value.data().data();
    const T* g = p.value.grad().data();
    T* m = p.moment1.data();
    T* v = p.moment2.data();
    const int64_t count = static_cast<int64_t>(n);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < count; ++i) {
      m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
      v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      const T adaptive = mhat / (std::sqrt(vhat) + eps);
      theta[i] -= lr * adaptive + lr * weight_decay * theta[i];
    }
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>> params) {
  for (auto& p : params) p.value.zero_grad();
}

template struct AdamW<float>;
template struct AdamW<double>;
template void zero_grad<float>(std::span<Parameter<float>>);
template void zero_grad<double>(std::span<Parameter<double>>);

}  // namespace sdh::tensor
