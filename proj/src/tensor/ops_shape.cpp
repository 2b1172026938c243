#include <cstring>
#include <memory>
#include <numeric>

#include "op_common.hpp"

namespace sdh::tensor {

namespace {

// forward gather through a bijective index map; backward scatters through the
// same map (each destination written once, so the parallel loop is race-free)
template <typename T>
Tensor<T> apply_bijection(const Tensor<T>& x, const Shape& out_shape,
                          std::shared_ptr<std::vector<int64_t>> src_index) {
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t n = y.numel();
  const int64_t* map = src_index->data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) py[i] = px[map[i]];
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, src_index]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
      const int64_t n = y.numel();
      const int64_t* map = src_index->data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) gx[map[i]] += gy[i];
    });
  }
  return y;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  return st;
}

}  // namespace

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw std::runtime_error("reshape: element count mismatch " +
                             shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor<T> y = Tensor<T>::from(shape, std::vector<T>(x.data().begin(), x.data().end()));
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      accumulate(x, y.grad().data(), y.numel());
    });
  }
  return y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<int>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw std::runtime_error("transpose: bad perm rank");
  Shape out_shape(in.size());
  std::vector<bool> seen(in.size(), false);
  for (size_t i = 0; i < perm.size(); ++i) {
    int p = perm[i];
    if (p < 0 || static_cast<size_t>(p) >= in.size() || seen[static_cast<size_t>(p)])
      throw std::runtime_error("transpose: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
    out_shape[i] = in[static_cast<size_t>(p)];
  }
  auto in_strides = strides_of(in);
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
  const int64_t n = x.numel();
  const size_t rank = in.size();
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
      int64_t coord = rem % out_shape[static_cast<size_t>(i)];
      rem /= out_shape[static_cast<size_t>(i)];
      src += coord * in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    (*map)[static_cast<size_t>(o)] = src;
  }
  return apply_bijection(x, out_shape, std::move(map));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw std::runtime_error("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis < 0 || static_cast<size_t>(axis) >= first.size())
    throw std::runtime_error("concat: axis out of range");
  Shape out_shape = first;
  int64_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != first.size()) throw std::runtime_error("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != first[i])
        throw std::runtime_error("concat: non-axis extent mismatch");
    total += s[static_cast<size_t>(axis)];
  }
  out_shape[static_cast<size_t>(axis)] = total;

  // outer = product before axis, inner = product after axis
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < first.size(); ++i)
    inner *= first[i];

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  T* py = y.data().data();
  int64_t offset = 0;
  for (const auto& x : xs) {
    const int64_t ax = x.shape()[static_cast<size_t>(axis)];
    const T* px = x.data().data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < outer; ++r)
      std::memcpy(py + (r * total + offset) * inner, px + r * ax * inner,
                  static_cast<size_t>(ax * inner) * sizeof(T));
    offset += ax;
  }
  bool need = false;
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  if (Tape<T>::active())
    for (const auto& x : xs) need = need || x.requires_grad();
  if (need) {
    y.set_requires_grad(true);
    std::vector<Tensor<T>> saved = xs;
    Tape<T>::active()->record([saved, y, axis, outer, inner, total]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      int64_t offset = 0;
      for (auto& x : saved) {
        const int64_t ax = x.shape()[static_cast<size_t>(axis)];
        if (x.requires_grad()) {
          auto gx = x.grad();
#pragma omp parallel for schedule(static)
          for (int64_t r = 0; r < outer; ++r) {
            const T* src = gy + (r * total + offset) * inner;
            T* dst = gx.data() + r * ax * inner;
            for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
          }
        }
        offset += ax;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, int64_t start, int64_t length) {
  const Shape& in = x.shape();
  if (axis < 0 || static_cast<size_t>(axis) >= in.size())
    throw std::runtime_error("narrow: axis out of range");
  if (start < 0 || length < 1 || start + length > in[static_cast<size_t>(axis)])
    throw std::runtime_error("narrow: range out of bounds");
  Shape out_shape = in;
  out_shape[static_cast<size_t>(axis)] = length;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < in.size(); ++i) inner *= in[i];
  const int64_t ax = in[static_cast<size_t>(axis)];

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data().data();
  T* py = y.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < outer; ++r)
    std::memcpy(py + r * length * inner, px + (r * ax + start) * inner,
                static_cast<size_t>(length * inner) * sizeof(T));
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, outer, inner, ax, start, length]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
#pragma omp parallel for schedule(static)
      for (int64_t r = 0; r < outer; ++r) {
        T* dst = gx.data() + (r * ax + start) * inner;
        const T* src = gy + r * length * inner;
        for (int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> roll_hw(const Tensor<T>& x, int64_t sh, int64_t sw) {
  check_rank(x.shape(), 4, "roll_hw");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  auto mod = [](int64_t a, int64_t m) { return ((a % m) + m) % m; };
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        int64_t src_h = mod(h - sh, H);
        int64_t src_w = mod(w - sw, W);
        int64_t dst = ((b * H + h) * W + w) * C;
        int64_t src = ((b * H + src_h) * W + src_w) * C;
        for (int64_t c = 0; c < C; ++c)
          (*map)[static_cast<size_t>(dst + c)] = src + c;
      }
  return apply_bijection(x, x.shape(), std::move(map));
}

// window partition / reverse live here as pure bijections; attention uses them

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t m) {
  check_rank(x.shape(), 4, "window_partition");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % m || W % m)
    throw std::runtime_error("window_partition: H and W must be divisible by window");
  const int64_t nh = H / m, nw = W / m;
  Shape out_shape = {B * nh * nw, m * m, C};
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t wh = 0; wh < nh; ++wh)
      for (int64_t ww = 0; ww < nw; ++ww)
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < m; ++j) {
            int64_t dst = ((((b * nh + wh) * nw + ww) * m * m) + i * m + j) * C;
            int64_t src = ((b * H + wh * m + i) * W + ww * m + j) * C;
            for (int64_t c = 0; c < C; ++c)
              (*map)[static_cast<size_t>(dst + c)] = src + c;
          }
  return apply_bijection(x, out_shape, std::move(map));
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, int64_t m, int64_t b,
                         int64_t h, int64_t w) {
  check_rank(windows.shape(), 3, "window_reverse");
  const int64_t C = windows.dim(2);
  const int64_t nh = h / m, nw = w / m;
  if (windows.dim(0) != b * nh * nw || windows.dim(1) != m * m)
    throw std::runtime_error("window_reverse: inconsistent window grid");
  Shape out_shape = {b, h, w, C};
  auto map = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(windows.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t bb = 0; bb < b; ++bb)
    for (int64_t wh = 0; wh < nh; ++wh)
      for (int64_t ww = 0; ww < nw; ++ww)
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < m; ++j) {
            int64_t dst = ((bb * h + wh * m + i) * w + ww * m + j) * C;
            int64_t src = ((((bb * nh + wh) * nw + ww) * m * m) + i * m + j) * C;
            for (int64_t c = 0; c < C; ++c)
              (*map)[static_cast<size_t>(dst + c)] = src + c;
          }
  return apply_bijection(windows, out_shape, std::move(map));
}

template <typename T>
Tensor<T> patch_partition(const Tensor<T>& x, int64_t patch) {
  check_rank(x.shape(), 4, "patch_partition");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % patch || W % patch)
    throw std::runtime_error("patch_partition: dims not divisible by patch");
  const int64_t oh = H / patch, ow = W / patch;
  Shape out_shape = {B, oh, ow, patch * patch * C};
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t z = 0; z < ow; ++z)
        for (int64_t i = 0; i < patch; ++i)
          for (int64_t j = 0; j < patch; ++j) {
            int64_t dst =
                (((b * oh + y) * ow + z) * patch * patch + i * patch + j) * C;
            int64_t src = ((b * H + y * patch + i) * W + z * patch + j) * C;
            for (int64_t c = 0; c < C; ++c)
              (*map)[static_cast<size_t>(dst + c)] = src + c;
          }
  return apply_bijection(x, out_shape, std::move(map));
}

template <typename T>
Tensor<T> patch_merge_rearrange(const Tensor<T>& x) {
  check_rank(x.shape(), 4, "patch_merge");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % 2 || W % 2) throw std::runtime_error("patch_merge: odd extents");
  const int64_t oh = H / 2, ow = W / 2;
  Shape out_shape = {B, oh, ow, 4 * C};
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t z = 0; z < ow; ++z)
        for (int64_t q = 0; q < 4; ++q) {
          int64_t iy = y * 2 + q / 2, iz = z * 2 + q % 2;
          int64_t dst = (((b * oh + y) * ow + z) * 4 + q) * C;
          int64_t src = ((b * H + iy) * W + iz) * C;
          for (int64_t c = 0; c < C; ++c)
            (*map)[static_cast<size_t>(dst + c)] = src + c;
        }
  return apply_bijection(x, out_shape, std::move(map));
}

template <typename T>
Tensor<T> patch_expand_rearrange(const Tensor<T>& x) {
  check_rank(x.shape(), 4, "patch_expand");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (C % 4) throw std::runtime_error("patch_expand: channels not divisible by 4");
  const int64_t oc = C / 4;
  Shape out_shape = {B, 2 * H, 2 * W, oc};
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t z = 0; z < W; ++z)
        for (int64_t q = 0; q < 4; ++q) {
          int64_t oy = y * 2 + q / 2, oz = z * 2 + q % 2;
          int64_t dst = ((b * 2 * H + oy) * 2 * W + oz) * oc;
          int64_t src = ((b * H + y) * W + z) * C + q * oc;
          for (int64_t c = 0; c < oc; ++c)
            (*map)[static_cast<size_t>(dst + c)] = src + c;
        }
  return apply_bijection(x, out_shape, std::move(map));
}

#define SDH_SHAPE_INST(T)                                                       \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);               \
  template Tensor<T> transpose<T>(const Tensor<T>&, const std::vector<int>&);  \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);            \
  template Tensor<T> narrow<T>(const Tensor<T>&, int, int64_t, int64_t);       \
  template Tensor<T> roll_hw<T>(const Tensor<T>&, int64_t, int64_t);           \
  template Tensor<T> window_partition<T>(const Tensor<T>&, int64_t);           \
  template Tensor<T> window_reverse<T>(const Tensor<T>&, int64_t, int64_t,     \
                                       int64_t, int64_t);                      \
  template Tensor<T> patch_partition<T>(const Tensor<T>&, int64_t);            \
  template Tensor<T> patch_merge_rearrange<T>(const Tensor<T>&);               \
  template Tensor<T> patch_expand_rearrange<T>(const Tensor<T>&);

SDH_INSTANTIATE_OPS(SDH_SHAPE_INST)

}  // namespace sdh::tensor
