#pragma once

#include <stdexcept>
#include <string>

#include "sdh/tensor/ops.hpp"

namespace sdh::tensor {

inline void check_same_shape(const Shape& a, const Shape& b, const char* who) {
  if (a != b)
    throw std::runtime_error(std::string(who) + ": shape mismatch " +
                             shape_str(a) + " vs " + shape_str(b));
}

inline void check_rank(const Shape& s, size_t rank, const char* who) {
  if (s.size() != rank)
    throw std::runtime_error(std::string(who) + ": expected rank " +
                             std::to_string(rank) + ", got " + shape_str(s));
}

// accumulate src into dst gradient only when the input participates
template <typename T>
inline void accumulate(const Tensor<T>& t, const T* src, int64_t n) {
  if (!t.requires_grad()) return;
  auto g = t.grad();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace sdh::tensor

#define SDH_INSTANTIATE_OPS(MACRO) \
  MACRO(float)                     \
  MACRO(double)
