#include "op_common.hpp"

namespace sdh::tensor {

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() < 1) throw std::runtime_error("linear: scalar input");
  check_rank(w.shape(), 2, "linear weight");
  check_rank(b.shape(), 1, "linear bias");
  const int64_t in = x.shape().back();
  const int64_t out = w.dim(0);
  if (w.dim(1) != in) throw std::runtime_error("linear: weight/input mismatch");
  if (b.dim(0) != out) throw std::runtime_error("linear: bias/weight mismatch");
  const int64_t rows = x.numel() / in;

  Shape out_shape = x.shape();
  out_shape.back() = out;
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data().data();
  const T* pw = w.data().data();
  const T* pb = b.data().data();
  T* py = y.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * in;
    T* yr = py + r * out;
    for (int64_t o = 0; o < out; ++o) {
      const T* wr = pw + o * in;
      T acc = pb[o];
      for (int64_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
  if (grad_enabled<T>({&x, &w, &b})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, w, b, y, rows, in, out]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* px = x.data().data();
      const T* pw = w.data().data();
      if (x.requires_grad()) {
        auto gx = x.grad();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
          const T* gyr = gy + r * out;
          T* gxr = gx.data() + r * in;
          for (int64_t o = 0; o < out; ++o) {
            const T g = gyr[o];
            const T* wr = pw + o * in;
            for (int64_t i = 0; i < in; ++i) gxr[i] += g * wr[i];
          }
        }
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
#pragma omp parallel for schedule(static)
        for (int64_t o = 0; o < out; ++o) {
          T* gwr = gw.data() + o * in;
          for (int64_t r = 0; r < rows; ++r) {
            const T g = gy[r * out + o];
            const T* xr = px + r * in;
            for (int64_t i = 0; i < in; ++i) gwr[i] += g * xr[i];
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
#pragma omp parallel for schedule(static)
        for (int64_t o = 0; o < out; ++o) {
          double acc = 0.0;
          for (int64_t r = 0; r < rows; ++r) acc += gy[r * out + o];
          gb[o] += static_cast<T>(acc);
        }
      }
    });
  }
  return y;
}

namespace {

// c[g] = a[g] @ b[g] (or b[g]^T); all batched over the leading axis
template <typename T>
void bmm_forward(const T* a, const T* b, T* c, int64_t batch, int64_t m,
                 int64_t k, int64_t n, bool trans_b) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t g = 0; g < batch; ++g)
    for (int64_t i = 0; i < m; ++i) {
      const T* ar = a + (g * m + i) * k;
      T* cr = c + (g * m + i) * n;
      if (trans_b) {
        const T* bg = b + g * n * k;
        for (int64_t j = 0; j < n; ++j) {
          const T* br = bg + j * k;
          T acc = T(0);
          for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
          cr[j] = acc;
        }
      } else {
        const T* bg = b + g * k * n;
        for (int64_t j = 0; j < n; ++j) cr[j] = T(0);
        for (int64_t p = 0; p < k; ++p) {
          const T av = ar[p];
          const T* br = bg + p * n;
          for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
      }
    }
}

}  // namespace

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  check_rank(a.shape(), 3, "bmm lhs");
  check_rank(b.shape(), 3, "bmm rhs");
  const int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  if (b.dim(0) != batch) throw std::runtime_error("bmm: batch mismatch");
  const int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  const int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k) throw std::runtime_error("bmm: inner extent mismatch");

  Tensor<T> y = Tensor<T>::zeros({batch, m, n});
  bmm_forward(a.data().data(), b.data().data(), y.data().data(), batch, m, k, n,
              transpose_b);
  if (grad_enabled<T>({&a, &b})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([a, b, y, batch, m, k, n, transpose_b]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* pa = a.data().data();
      const T* pb = b.data().data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        // ga = gy @ b^T (nn) or gy @ b (when b was transposed)
#pragma omp parallel for collapse(2) schedule(static)
        for (int64_t g = 0; g < batch; ++g)
          for (int64_t i = 0; i < m; ++i) {
            const T* gyr = gy + (g * m + i) * n;
            T* gar = ga.data() + (g * m + i) * k;
            if (transpose_b) {
              const T* bg = pb + g * n * k;  // (n, k)
              for (int64_t j = 0; j < n; ++j) {
                const T gv = gyr[j];
                const T* br = bg + j * k;
                for (int64_t p = 0; p < k; ++p) gar[p] += gv * br[p];
              }
            } else {
              const T* bg = pb + g * k * n;  // (k, n)
              for (int64_t p = 0; p < k; ++p) {
                const T* br = bg + p * n;
                T acc = T(0);
                for (int64_t j = 0; j < n; ++j) acc += gyr[j] * br[j];
                gar[p] += acc;
              }
            }
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        if (transpose_b) {
          // y = a @ b^T, b is (n, k): gb[j,p] += sum_i gy[i,j] * a[i,p]
#pragma omp parallel for collapse(2) schedule(static)
          for (int64_t g = 0; g < batch; ++g)
            for (int64_t j = 0; j < n; ++j) {
              T* gbr = gb.data() + (g * n + j) * k;
              for (int64_t i = 0; i < m; ++i) {
                const T gv = gy[(g * m + i) * n + j];
                const T* ar = pa + (g * m + i) * k;
                for (int64_t p = 0; p < k; ++p) gbr[p] += gv * ar[p];
              }
            }
        } else {
          // b is (k, n): gb[p,j] += sum_i a[i,p] * gy[i,j]
#pragma omp parallel for collapse(2) schedule(static)
          for (int64_t g = 0; g < batch; ++g)
            for (int64_t p = 0; p < k; ++p) {
              T* gbr = gb.data() + (g * k + p) * n;
              for (int64_t i = 0; i < m; ++i) {
                const T av = pa[(g * m + i) * k + p];
                const T* gyr = gy + (g * m + i) * n;
                for (int64_t j = 0; j < n; ++j) gbr[j] += av * gyr[j];
              }
            }
        }
      }
    });
  }
  return y;
}

#define SDH_LINEAR_INST(T)                                                     \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&);                             \
  template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&, bool);

SDH_INSTANTIATE_OPS(SDH_LINEAR_INST)

}  // namespace sdh::tensor
