#include <cmath>
#include <limits>

#include "op_common.hpp"

namespace sdh::tensor {

// Additive attention mask for a cyclic shift: tokens are tagged by the
// region band they came from; pairs with different tags get -inf so the
// wrapped neighbors cannot attend to each other.
template <typename T>
std::vector<T> build_shift_mask(int64_t h, int64_t w, int64_t m, int64_t shift) {
  const int64_t nh = h / m, nw = w / m;
  const int64_t n_windows = nh * nw;
  const int64_t tokens = m * m;
  std::vector<T> mask(static_cast<size_t>(n_windows * tokens * tokens), T(0));
  if (shift == 0) return mask;

  auto band = [&](int64_t coord, int64_t extent) {
    // bands after rolling by -shift: [0, extent-m), [extent-m, extent-shift),
    // [extent-shift, extent)
    if (coord < extent - m) return 0;
    if (coord < extent - shift) return 1;
    return 2;
  };
  std::vector<int> region(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      region[static_cast<size_t>(y * w + x)] = band(y, h) * 3 + band(x, w);

  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (int64_t wh = 0; wh < nh; ++wh)
    for (int64_t ww = 0; ww < nw; ++ww) {
      T* mw = mask.data() + (wh * nw + ww) * tokens * tokens;
      for (int64_t a = 0; a < tokens; ++a) {
        int ra = region[static_cast<size_t>((wh * m + a / m) * w + ww * m + a % m)];
        for (int64_t b = 0; b < tokens; ++b) {
          int rb = region[static_cast<size_t>((wh * m + b / m) * w + ww * m + b % m)];
          if (ra != rb) mw[a * tokens + b] = neg_inf;
        }
      }
    }
  return mask;
}

template <typename T>
Tensor<T> window_msa(const Tensor<T>& x, const WindowMsaParams<T>& p, int64_t m,
                     int64_t heads, int64_t shift) {
  check_rank(x.shape(), 4, "window_msa");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % m || W % m)
    throw std::runtime_error("window_msa: H and W must be divisible by window");
  if (C % heads) throw std::runtime_error("window_msa: C must be divisible by heads");
  if (shift != 0 && shift != m / 2)
    throw std::runtime_error("window_msa: shift must be 0 or window/2");
  const int64_t n_windows = (H / m) * (W / m);
  const int64_t tokens = m * m;
  const int64_t head_dim = C / heads;

  Tensor<T> shifted = shift ? roll_hw(x, -shift, -shift) : x;
  Tensor<T> windows = window_partition(shifted, m);  // (B*nW, T, C)
  const int64_t G = windows.dim(0);

  Tensor<T> qkv = linear(windows, p.w_qkv, p.b_qkv);  // (G, T, 3C)
  Tensor<T> q = narrow(qkv, 2, 0, C);
  Tensor<T> k = narrow(qkv, 2, C, C);
  Tensor<T> v = narrow(qkv, 2, 2 * C, C);

  // (G, T, C) -> (G*heads, T, head_dim)
  auto split_heads = [&](const Tensor<T>& t) {
    Tensor<T> r = reshape(t, {G, tokens, heads, head_dim});
    r = transpose(r, {0, 2, 1, 3});
    return reshape(r, {G * heads, tokens, head_dim});
  };
  Tensor<T> qh = split_heads(q);
  Tensor<T> kh = split_heads(k);
  Tensor<T> vh = split_heads(v);

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor<T> scores = mul_scalar(bmm(qh, kh, /*transpose_b=*/true), scale);

  std::vector<T> mask;
  if (shift) mask = build_shift_mask<T>(H, W, m, shift);
  // rows of `scores` are grouped (B, window, head): reorder so the window
  // index is recoverable as (row/heads) % n_windows
  Tensor<T> attn = attn_softmax(scores, mask, n_windows, heads);

  Tensor<T> ctx = bmm(attn, vh, /*transpose_b=*/false);  // (G*heads, T, d)
  Tensor<T> merged = reshape(ctx, {G, heads, tokens, head_dim});
  merged = transpose(merged, {0, 2, 1, 3});
  merged = reshape(merged, {G, tokens, C});
  Tensor<T> out = linear(merged, p.w_proj, p.b_proj);

  Tensor<T> grid = window_reverse(out, m, B, H, W);
  return shift ? roll_hw(grid, shift, shift) : grid;
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> gathered = patch_merge_rearrange(x);  // (B, H/2, W/2, 4C)
  if (w.dim(1) != gathered.shape().back())
    throw std::runtime_error("patch_merge: weight expects 4C inputs");
  return linear(gathered, w, b);
}

template <typename T>
Tensor<T> patch_expand(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int64_t C = x.shape().back();
  if (w.dim(0) != 2 * C || w.dim(1) != C)
    throw std::runtime_error("patch_expand: weight must map C -> 2C");
  Tensor<T> up = linear(x, w, b);          // (B, H, W, 2C)
  return patch_expand_rearrange(up);       // (B, 2H, 2W, C/2)
}

#define SDH_ATTN_INST(T)                                                        \
  template std::vector<T> build_shift_mask<T>(int64_t, int64_t, int64_t,        \
                                              int64_t);                         \
  template Tensor<T> window_msa<T>(const Tensor<T>&, const WindowMsaParams<T>&, \
                                   int64_t, int64_t, int64_t);                  \
  template Tensor<T> patch_merge<T>(const Tensor<T>&, const Tensor<T>&,         \
                                    const Tensor<T>&);                          \
  template Tensor<T> patch_expand<T>(const Tensor<T>&, const Tensor<T>&,        \
                                     const Tensor<T>&);

SDH_INSTANTIATE_OPS(SDH_ATTN_INST)

}  // namespace sdh::tensor
