#pragma once

#include <span>

#include "sdh/tensor/tensor.hpp"

namespace sdh::tensor {

// Decoupled weight decay: the decay term uses the pre-update value and is
// applied separately from the bias-corrected adaptive step.
template <typename T>
struct AdamW {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(0);

  void step(std::span<Parameter<T>> params);
};

template <typename T>
void zero_grad(std::span<Parameter<T>> params);

}  // namespace sdh::tensor
