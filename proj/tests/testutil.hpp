#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sdh/rng.hpp"
#include "sdh/tensor/ops.hpp"
#include "sdh/tensor/tensor.hpp"

namespace sdh::testutil {

using tensor::Shape;
using tensor::Tensor;

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::vector<T> v(static_cast<size_t>(tensor::shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(shape, std::move(v));
}

// random tensor kept away from kinks of relu/max-style ops
template <typename T>
Tensor<T> random_tensor_nonkink(const Shape& shape, Rng& rng) {
  std::vector<T> v(static_cast<size_t>(tensor::shape_numel(shape)));
  for (auto& x : v) {
    double u = rng.uniform(-1.0, 1.0);
    if (std::abs(u) < 0.05) u = u < 0 ? u - 0.05 : u + 0.05;
    x = static_cast<T>(u);
  }
  return Tensor<T>::from(shape, std::move(v));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int checked = 0;
};

// Central finite differences of a scalar-valued forward against the tape
// gradient. `forward` must rebuild the graph from the same leaf tensors on
// every call. Checks every coordinate of every leaf unless max_coords_per_leaf
// caps it (coordinates then sampled deterministically).
template <typename T>
GradCheckResult grad_check(
    const std::function<Tensor<T>()>& forward,
    const std::vector<Tensor<T>>& leaves, double h,
    int max_coords_per_leaf = -1, uint64_t coord_seed = 0) {
  for (const auto& leaf : leaves) leaf.set_requires_grad(true);

  // analytic gradients
  for (const auto& leaf : leaves) leaf.zero_grad();
  {
    tensor::Tape<T> tape;
    Tensor<T> loss = forward();
    tape.backward(loss);
  }
  std::vector<std::vector<T>> analytic;
  for (const auto& leaf : leaves) {
    if (leaf.has_grad())
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    else
      analytic.emplace_back(static_cast<size_t>(leaf.numel()), T(0));
  }

  GradCheckResult res;
  Rng pick(coord_seed ^ 0xabcdef12345ull);
  for (size_t li = 0; li < leaves.size(); ++li) {
    const auto& leaf = leaves[li];
    const int64_t n = leaf.numel();
    std::vector<int64_t> coords;
    if (max_coords_per_leaf > 0 && n > max_coords_per_leaf) {
      for (int c = 0; c < max_coords_per_leaf; ++c)
        coords.push_back(static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(n))));
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }
    for (int64_t i : coords) {
      T* slot = leaf.data().data() + i;
      const T orig = *slot;
      *slot = orig + static_cast<T>(h);
      double fp = static_cast<double>(forward().item());
      *slot = orig - static_cast<T>(h);
      double fm = static_cast<double>(forward().item());
      *slot = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double a = static_cast<double>(analytic[li][static_cast<size_t>(i)]);
      double abs_err = std::abs(a - numeric);
      double denom = std::max(1.0, std::max(std::abs(a), std::abs(numeric)));
      res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace sdh::testutil
