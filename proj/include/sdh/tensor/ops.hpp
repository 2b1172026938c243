#pragma once

#include <array>
#include <optional>

#include "sdh/tensor/tensor.hpp"

namespace sdh::tensor {

// ---- elementwise -----------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01));
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

// train mode: zero each element with probability p and scale survivors by
// 1/(1-p); masks are a pure function of (seed, element index).
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, uint64_t seed);

// explicit broadcast from size-1 axes (no implicit broadcasting anywhere)
template <typename T> Tensor<T> expand(const Tensor<T>& x, const Shape& target);

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<int>& axes);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<int>& axes);
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, const std::vector<int>& axes);

template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

// ---- shape -----------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<int>& perm);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, int64_t start, int64_t length);
// cyclic shift along axes 1 and 2 of a (B, H, W, C) tensor
template <typename T> Tensor<T> roll_hw(const Tensor<T>& x, int64_t sh, int64_t sw);

// ---- linear algebra --------------------------------------------------------
// y[..., o] = b[o] + sum_i x[..., i] * w[o, i]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
// (B,M,K) x (B,K,N); transpose_b treats b as (B,N,K)
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// ---- convolution / pooling -------------------------------------------------
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 1);
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 1);

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int window_h, int window_w);
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, const std::array<int, 3>& window);

// ---- normalization ---------------------------------------------------------
// channel axis 1; in train mode updates running stats in place
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, bool train, T eps = T(1e-5),
                    T momentum = T(0.1));

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

template <typename T> Tensor<T> softmax_lastaxis(const Tensor<T>& x);

// softmax over the last axis of (G, Tq, Tk) scores with an additive
// window-periodic mask of shape (n_windows, Tq, Tk); row g belongs to
// window (g / heads) % n_windows.
template <typename T>
Tensor<T> attn_softmax(const Tensor<T>& scores, const std::vector<T>& mask,
                       int64_t n_windows, int64_t heads);

// ---- interpolation (align-corners linear) -----------------------------------
template <typename T>
Tensor<T> interpolate2d(const Tensor<T>& x, int64_t oh, int64_t ow);
template <typename T>
Tensor<T> interpolate3d(const Tensor<T>& x, int64_t od, int64_t oh, int64_t ow);

// ---- window attention / patch ops ------------------------------------------
template <typename T> Tensor<T> window_partition(const Tensor<T>& x, int64_t m);
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, int64_t m, int64_t b,
                         int64_t h, int64_t w);

template <typename T>
struct WindowMsaParams {
  Tensor<T> w_qkv;   // (3C, C)
  Tensor<T> b_qkv;   // (3C)
  Tensor<T> w_proj;  // (C, C)
  Tensor<T> b_proj;  // (C)
};

// additive mask (0 or -inf) forbidding attention between tokens wrapped in
// from non-adjacent regions by the cyclic shift
template <typename T>
std::vector<T> build_shift_mask(int64_t h, int64_t w, int64_t m, int64_t shift);

template <typename T>
Tensor<T> window_msa(const Tensor<T>& x, const WindowMsaParams<T>& p, int64_t m,
                     int64_t heads, int64_t shift);

template <typename T> Tensor<T> patch_partition(const Tensor<T>& x, int64_t patch);
template <typename T> Tensor<T> patch_merge_rearrange(const Tensor<T>& x);
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T> Tensor<T> patch_expand_rearrange(const Tensor<T>& x);
template <typename T>
Tensor<T> patch_expand(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- losses ------------------------------------------------------------------
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets,
                          T pos_weight = T(1));
template <typename T>
Tensor<T> bce_probs(const Tensor<T>& probs, const Tensor<T>& targets);
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& targets,
                    T eps = T(1e-6));

}  // namespace sdh::tensor
