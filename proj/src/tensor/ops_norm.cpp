#include <cmath>
#include <memory>

#include "op_common.hpp"

namespace sdh::tensor {

// Batch norm over channel axis 1 for (N, C, spatial...) tensors. Train mode
// normalizes with biased batch statistics and refreshes running stats with
// the unbiased variance; eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, bool train, T eps, T momentum) {
  if (x.rank() < 2) throw std::runtime_error("batchnorm: rank must be >= 2");
  const int64_t N = x.dim(0), C = x.dim(1);
  int64_t spatial = 1;
  for (size_t i = 2; i < x.rank(); ++i) spatial *= x.dim(i);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C)
    throw std::runtime_error("batchnorm: channel parameter mismatch");
  const int64_t count = N * spatial;

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  const T* px = x.data().data();

  if (train) {
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = px + (n * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          s += p[i];
          s2 += static_cast<double>(p[i]) * p[i];
        }
      }
      double m = s / static_cast<double>(count);
      double var = s2 / static_cast<double>(count) - m * m;
      if (var < 0.0) var = 0.0;
      (*mean)[static_cast<size_t>(c)] = static_cast<T>(m);
      (*invstd)[static_cast<size_t>(c)] =
          static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      double unbiased = count > 1 ? var * count / (count - 1.0) : var;
      running_mean.data()[c] =
          (T(1) - momentum) * running_mean.data()[c] + momentum * static_cast<T>(m);
      running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] +
                              momentum * static_cast<T>(unbiased);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[static_cast<size_t>(c)] = running_mean.data()[c];
      (*invstd)[static_cast<size_t>(c)] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) +
                          static_cast<double>(eps)));
    }
  }

  Tensor<T> y = Tensor<T>::zeros(x.shape());
  T* py = y.data().data();
  const T* pg = gamma.data().data();
  const T* pbeta = beta.data().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T m = (*mean)[static_cast<size_t>(c)];
      const T is = (*invstd)[static_cast<size_t>(c)];
      const T g = pg[c], b = pbeta[c];
      const T* p = px + (n * C + c) * spatial;
      T* q = py + (n * C + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) q[i] = (p[i] - m) * is * g + b;
    }

  if (grad_enabled<T>({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record(
        [x, gamma, beta, y, mean, invstd, N, C, spatial, count, train]() mutable {
          if (!y.has_grad()) return;
          const T* gy = y.grad().data();
          const T* px = x.data().data();
          const T* pg = gamma.data().data();
          // per-channel reductions of gy and gy*xhat
          std::vector<double> sum_gy(static_cast<size_t>(C), 0.0);
          std::vector<double> sum_gy_xhat(static_cast<size_t>(C), 0.0);
#pragma omp parallel for schedule(static)
          for (int64_t c = 0; c < C; ++c) {
            const T m = (*mean)[static_cast<size_t>(c)];
            const T is = (*invstd)[static_cast<size_t>(c)];
            double sg = 0.0, sgx = 0.0;
            for (int64_t n = 0; n < N; ++n) {
              const T* p = px + (n * C + c) * spatial;
              const T* g = gy + (n * C + c) * spatial;
              for (int64_t i = 0; i < spatial; ++i) {
                sg += g[i];
                sgx += static_cast<double>(g[i]) * ((p[i] - m) * is);
              }
            }
            sum_gy[static_cast<size_t>(c)] = sg;
            sum_gy_xhat[static_cast<size_t>(c)] = sgx;
          }
          if (gamma.requires_grad()) {
            auto gg = gamma.grad();
            for (int64_t c = 0; c < C; ++c)
              gg[c] += static_cast<T>(sum_gy_xhat[static_cast<size_t>(c)]);
          }
          if (beta.requires_grad()) {
            auto gb = beta.grad();
            for (int64_t c = 0; c < C; ++c)
              gb[c] += static_cast<T>(sum_gy[static_cast<size_t>(c)]);
          }
          if (x.requires_grad()) {
            auto gx = x.grad();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t n = 0; n < N; ++n)
              for (int64_t c = 0; c < C; ++c) {
                const T m = (*mean)[static_cast<size_t>(c)];
                const T is = (*invstd)[static_cast<size_t>(c)];
                const T g = pg[c];
                const T* p = px + (n * C + c) * spatial;
                const T* gyp = gy + (n * C + c) * spatial;
                T* gxp = gx.data() + (n * C + c) * spatial;
                if (train) {
                  const T k1 = static_cast<T>(sum_gy[static_cast<size_t>(c)] /
                                              static_cast<double>(count));
                  const T k2 = static_cast<T>(sum_gy_xhat[static_cast<size_t>(c)] /
                                              static_cast<double>(count));
                  for (int64_t i = 0; i < spatial; ++i) {
                    T xhat = (p[i] - m) * is;
                    gxp[i] += g * is * (gyp[i] - k1 - xhat * k2);
                  }
                } else {
                  for (int64_t i = 0; i < spatial; ++i) gxp[i] += g * is * gyp[i];
                }
              }
          }
        });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  if (x.rank() < 1) throw std::runtime_error("layer_norm: scalar input");
  const int64_t F = x.shape().back();
  if (gamma.numel() != F || beta.numel() != F)
    throw std::runtime_error("layer_norm: affine parameter mismatch");
  const int64_t rows = x.numel() / F;

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* py = y.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = px + r * F;
    double s = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < F; ++i) {
      s += p[i];
      s2 += static_cast<double>(p[i]) * p[i];
    }
    double m = s / static_cast<double>(F);
    double var = s2 / static_cast<double>(F) - m * m;
    if (var < 0.0) var = 0.0;
    T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*mean)[static_cast<size_t>(r)] = static_cast<T>(m);
    (*invstd)[static_cast<size_t>(r)] = is;
    T* q = py + r * F;
    for (int64_t i = 0; i < F; ++i)
      q[i] = (p[i] - static_cast<T>(m)) * is * pg[i] + pb[i];
  }

  if (grad_enabled<T>({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, gamma, beta, y, mean, invstd, rows, F]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* px = x.data().data();
      const T* pg = gamma.data().data();
      if (gamma.requires_grad() || beta.requires_grad()) {
        // feature-axis reductions kept serial over rows for determinism
        std::vector<double> gg(static_cast<size_t>(F), 0.0);
        std::vector<double> gb(static_cast<size_t>(F), 0.0);
        for (int64_t r = 0; r < rows; ++r) {
          const T m = (*mean)[static_cast<size_t>(r)];
          const T is = (*invstd)[static_cast<size_t>(r)];
          const T* p = px + r * F;
          const T* g = gy + r * F;
          for (int64_t i = 0; i < F; ++i) {
            gg[static_cast<size_t>(i)] += static_cast<double>(g[i]) * ((p[i] - m) * is);
            gb[static_cast<size_t>(i)] += g[i];
          }
        }
        if (gamma.requires_grad()) {
          auto t = gamma.grad();
          for (int64_t i = 0; i < F; ++i) t[i] += static_cast<T>(gg[static_cast<size_t>(i)]);
        }
        if (beta.requires_grad()) {
          auto t = beta.grad();
          for (int64_t i = 0; i < F; ++i) t[i] += static_cast<T>(gb[static_cast<size_t>(i)]);
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
          const T m = (*mean)[static_cast<size_t>(r)];
          const T is = (*invstd)[static_cast<size_t>(r)];
          const T* p = px + r * F;
          const T* g = gy + r * F;
          T* q = gx.data() + r * F;
          double sg = 0.0, sgx = 0.0;
          for (int64_t i = 0; i < F; ++i) {
            double gd = static_cast<double>(g[i]) * pg[i];
            double xhat = (p[i] - m) * is;
            sg += gd;
            sgx += gd * xhat;
          }
          const double inv_f = 1.0 / static_cast<double>(F);
          for (int64_t i = 0; i < F; ++i) {
            double gd = static_cast<double>(g[i]) * pg[i];
            double xhat = (p[i] - m) * is;
            q[i] += static_cast<T>(is * (gd - sg * inv_f - xhat * sgx * inv_f));
          }
        }
      }
    });
  }
  return y;
}

namespace {

template <typename T>
void softmax_rows(const T* px, T* py, int64_t rows, int64_t F, const T* mask,
                  int64_t mask_period_rows, int64_t mask_row_len) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = px + r * F;
    T* q = py + r * F;
    const T* mrow = nullptr;
    if (mask) {
      int64_t m_idx = (r / mask_row_len) % mask_period_rows;
      mrow = mask + (m_idx * mask_row_len + r % mask_row_len) * F;
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t i = 0; i < F; ++i) {
      T v = mrow ? p[i] + mrow[i] : p[i];
      if (v > mx) mx = v;
    }
    double denom = 0.0;
    for (int64_t i = 0; i < F; ++i) {
      T v = mrow ? p[i] + mrow[i] : p[i];
      q[i] = std::exp(v - mx);
      denom += q[i];
    }
    const T inv = static_cast<T>(1.0 / denom);
    for (int64_t i = 0; i < F; ++i) q[i] *= inv;
  }
}

template <typename T>
void softmax_backward_rows(const T* py, const T* gy, T* gx, int64_t rows,
                           int64_t F) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* y = py + r * F;
    const T* g = gy + r * F;
    T* q = gx + r * F;
    double dot = 0.0;
    for (int64_t i = 0; i < F; ++i) dot += static_cast<double>(g[i]) * y[i];
    for (int64_t i = 0; i < F; ++i)
      q[i] += (g[i] - static_cast<T>(dot)) * y[i];
  }
}

}  // namespace

template <typename T>
Tensor<T> softmax_lastaxis(const Tensor<T>& x) {
  if (x.rank() < 1) throw std::runtime_error("softmax: scalar input");
  const int64_t F = x.shape().back();
  const int64_t rows = x.numel() / F;
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  softmax_rows(x.data().data(), y.data().data(), rows, F,
               static_cast<const T*>(nullptr), 0, 0);
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, rows, F]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      softmax_backward_rows(y.data().data(), y.grad().data(), x.grad().data(),
                            rows, F);
    });
  }
  return y;
}

template <typename T>
Tensor<T> attn_softmax(const Tensor<T>& scores, const std::vector<T>& mask,
                       int64_t n_windows, int64_t heads) {
  check_rank(scores.shape(), 3, "attn_softmax");
  const int64_t G = scores.dim(0), Tq = scores.dim(1), Tk = scores.dim(2);
  if (G % (n_windows * heads) != 0)
    throw std::runtime_error("attn_softmax: row count not divisible by windows*heads");
  if (!mask.empty() &&
      static_cast<int64_t>(mask.size()) != n_windows * Tq * Tk)
    throw std::runtime_error("attn_softmax: mask size mismatch");

  Tensor<T> y = Tensor<T>::zeros(scores.shape());
  // row group g covers one (batch, window, head); window id = (g/heads) % nW
  const int64_t rows = G * Tq;
  const T* px = scores.data().data();
  T* py = y.data().data();
  if (mask.empty()) {
    softmax_rows(px, py, rows, Tk, static_cast<const T*>(nullptr), 0, 0);
  } else {
#pragma omp parallel for schedule(static)
    for (int64_t g = 0; g < G; ++g) {
      const int64_t widx = (g / heads) % n_windows;
      const T* mrow = mask.data() + widx * Tq * Tk;
      softmax_rows(px + g * Tq * Tk, py + g * Tq * Tk, Tq, Tk, mrow, 1, Tq);
    }
  }
  if (grad_enabled<T>({&scores})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([scores, y, rows, Tk]() mutable {
      if (!y.has_grad() || !scores.requires_grad()) return;
      softmax_backward_rows(y.data().data(), y.grad().data(),
                            scores.grad().data(), rows, Tk);
    });
  }
  return y;
}

#define SDH_NORM_INST(T)                                                      \
  template Tensor<T> batchnorm<T>(const Tensor<T>&, const Tensor<T>&,        \
                                  const Tensor<T>&, Tensor<T>&, Tensor<T>&,  \
                                  bool, T, T);                               \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&,       \
                                   const Tensor<T>&, T);                     \
  template Tensor<T> softmax_lastaxis<T>(const Tensor<T>&);                  \
  template Tensor<T> attn_softmax<T>(const Tensor<T>&, const std::vector<T>&, \
                                     int64_t, int64_t);

SDH_INSTANTIATE_OPS(SDH_NORM_INST)

}  // namespace sdh::tensor
