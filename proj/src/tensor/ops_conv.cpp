#include <algorithm>

#include "op_common.hpp"
#include "sdh/tensor/kernels.hpp"

namespace sdh::tensor {

namespace kernels {

// Row-wise formulation: every (kernel tap, input row) pair contributes a
// scalar-times-shifted-row update, which vectorizes well. Parallel loops
// cover independent outputs only.

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co) {
      T* yplane = y + (n * d.cout + co) * d.oh * d.ow;
      const T bias = b ? b[co] : T(0);
      for (int64_t i = 0; i < d.oh * d.ow; ++i) yplane[i] = bias;
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        T* yrow = yplane + oh * d.ow;
        for (int64_t ci = 0; ci < d.cin; ++ci)
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            const int64_t ih = oh * d.stride - d.pad + kh;
            if (ih < 0 || ih >= d.h) continue;
            const T* xrow = x + ((n * d.cin + ci) * d.h + ih) * d.w;
            const T* wrow = w + ((co * d.cin + ci) * d.kh + kh) * d.kw;
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              const T wv = wrow[kw];
              const int64_t off = kw - d.pad;
              if (d.stride == 1) {
                const int64_t lo = std::max<int64_t>(0, -off);
                const int64_t hi = std::min<int64_t>(d.ow - 1, d.w - 1 - off);
                const T* xs = xrow + off;
                for (int64_t ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xs[ow];
              } else {
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                  const int64_t iw = ow * d.stride + off;
                  if (iw >= 0 && iw < d.w) yrow[ow] += wv * xrow[iw];
                }
              }
            }
          }
      }
    }
}

template <typename T>
void conv2d_backward_x(const T* gy, const T* w, T* gx, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t ci = 0; ci < d.cin; ++ci)
      for (int64_t ih = 0; ih < d.h; ++ih) {
        T* gxrow = gx + ((n * d.cin + ci) * d.h + ih) * d.w;
        for (int64_t co = 0; co < d.cout; ++co)
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            if (d.stride == 1) {
              const int64_t oh = ih + d.pad - kh;
              if (oh < 0 || oh >= d.oh) continue;
              const T* gyrow = gy + ((n * d.cout + co) * d.oh + oh) * d.ow;
              const T* wrow = w + ((co * d.cin + ci) * d.kh + kh) * d.kw;
              for (int64_t kw = 0; kw < d.kw; ++kw) {
                const T wv = wrow[kw];
                const int64_t shift = d.pad - kw;
                const int64_t lo = std::max<int64_t>(0, -shift);
                const int64_t hi = std::min<int64_t>(d.w - 1, d.ow - 1 - shift);
                const T* gs = gyrow + shift;
                for (int64_t iw = lo; iw <= hi; ++iw) gxrow[iw] += wv * gs[iw];
              }
            } else {
              const int64_t oh_num = ih + d.pad - kh;
              if (oh_num < 0 || oh_num % d.stride) continue;
              const int64_t oh = oh_num / d.stride;
              if (oh >= d.oh) continue;
              const T* gyrow = gy + ((n * d.cout + co) * d.oh + oh) * d.ow;
              const T* wrow = w + ((co * d.cin + ci) * d.kh + kh) * d.kw;
              for (int64_t kw = 0; kw < d.kw; ++kw)
                for (int64_t iw = 0; iw < d.w; ++iw) {
                  const int64_t ow_num = iw + d.pad - kw;
                  if (ow_num < 0 || ow_num % d.stride) continue;
                  const int64_t ow = ow_num / d.stride;
                  if (ow < d.ow) gxrow[iw] += wrow[kw] * gyrow[ow];
                }
            }
          }
      }
}

template <typename T>
void conv2d_backward_w(const T* x, const T* gy, T* gw, T* gb, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t co = 0; co < d.cout; ++co)
    for (int64_t ci = 0; ci < d.cin; ++ci)
      for (int64_t kh = 0; kh < d.kh; ++kh)
        for (int64_t kw = 0; kw < d.kw; ++kw) {
          double acc = 0.0;
          for (int64_t n = 0; n < d.n; ++n)
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              const int64_t ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              const T* gyrow = gy + ((n * d.cout + co) * d.oh + oh) * d.ow;
              const T* xrow = x + ((n * d.cin + ci) * d.h + ih) * d.w;
              if (d.stride == 1) {
                const int64_t off = kw - d.pad;
                const int64_t lo = std::max<int64_t>(0, -off);
                const int64_t hi = std::min<int64_t>(d.ow - 1, d.w - 1 - off);
                const T* xs = xrow + off;
                for (int64_t ow = lo; ow <= hi; ++ow)
                  acc += static_cast<double>(gyrow[ow]) * xs[ow];
              } else {
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                  const int64_t iw = ow * d.stride - d.pad + kw;
                  if (iw >= 0 && iw < d.w)
                    acc += static_cast<double>(gyrow[ow]) * xrow[iw];
                }
              }
            }
          gw[((co * d.cin + ci) * d.kh + kh) * d.kw + kw] += static_cast<T>(acc);
        }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int64_t n = 0; n < d.n; ++n) {
        const T* gyplane = gy + (n * d.cout + co) * d.oh * d.ow;
        for (int64_t i = 0; i < d.oh * d.ow; ++i) acc += gyplane[i];
      }
      gb[co] += static_cast<T>(acc);
    }
  }
}

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* b, T* y, const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co) {
      T* yvol = y + (n * d.cout + co) * d.od * d.oh * d.ow;
      const T bias = b ? b[co] : T(0);
      for (int64_t i = 0; i < d.od * d.oh * d.ow; ++i) yvol[i] = bias;
      for (int64_t od = 0; od < d.od; ++od)
        for (int64_t oh = 0; oh < d.oh; ++oh) {
          T* yrow = yvol + (od * d.oh + oh) * d.ow;
          for (int64_t ci = 0; ci < d.cin; ++ci)
            for (int64_t kd = 0; kd < d.kd; ++kd) {
              const int64_t id = od * d.stride - d.pad + kd;
              if (id < 0 || id >= d.d) continue;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t ih = oh * d.stride - d.pad + kh;
                if (ih < 0 || ih >= d.h) continue;
                const T* xrow =
                    x + (((n * d.cin + ci) * d.d + id) * d.h + ih) * d.w;
                const T* wrow =
                    w + (((co * d.cin + ci) * d.kd + kd) * d.kh + kh) * d.kw;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const T wv = wrow[kw];
                  const int64_t off = kw - d.pad;
                  if (d.stride == 1) {
                    const int64_t lo = std::max<int64_t>(0, -off);
                    const int64_t hi = std::min<int64_t>(d.ow - 1, d.w - 1 - off);
                    const T* xs = xrow + off;
                    for (int64_t ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xs[ow];
                  } else {
                    for (int64_t ow = 0; ow < d.ow; ++ow) {
                      const int64_t iw = ow * d.stride + off;
                      if (iw >= 0 && iw < d.w) yrow[ow] += wv * xrow[iw];
                    }
                  }
                }
              }
            }
        }
    }
}

template <typename T>
void conv3d_backward_x(const T* gy, const T* w, T* gx, const Conv3dDims& d) {
  if (d.stride != 1) throw std::runtime_error("conv3d backward: stride 1 only");
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t ci = 0; ci < d.cin; ++ci)
      for (int64_t id = 0; id < d.d; ++id)
        for (int64_t ih = 0; ih < d.h; ++ih) {
          T* gxrow = gx + (((n * d.cin + ci) * d.d + id) * d.h + ih) * d.w;
          for (int64_t co = 0; co < d.cout; ++co)
            for (int64_t kd = 0; kd < d.kd; ++kd) {
              const int64_t od = id + d.pad - kd;
              if (od < 0 || od >= d.od) continue;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t oh = ih + d.pad - kh;
                if (oh < 0 || oh >= d.oh) continue;
                const T* gyrow =
                    gy + (((n * d.cout + co) * d.od + od) * d.oh + oh) * d.ow;
                const T* wrow =
                    w + (((co * d.cin + ci) * d.kd + kd) * d.kh + kh) * d.kw;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const T wv = wrow[kw];
                  const int64_t shift = d.pad - kw;
                  const int64_t lo = std::max<int64_t>(0, -shift);
                  const int64_t hi = std::min<int64_t>(d.w - 1, d.ow - 1 - shift);
                  const T* gs = gyrow + shift;
                  for (int64_t iw = lo; iw <= hi; ++iw) gxrow[iw] += wv * gs[iw];
                }
              }
            }
        }
}

template <typename T>
void conv3d_backward_w(const T* x, const T* gy, T* gw, T* gb, const Conv3dDims& d) {
  if (d.stride != 1) throw std::runtime_error("conv3d backward: stride 1 only");
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t co = 0; co < d.cout; ++co)
    for (int64_t ci = 0; ci < d.cin; ++ci)
      for (int64_t kd = 0; kd < d.kd; ++kd)
        for (int64_t kh = 0; kh < d.kh; ++kh)
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            double acc = 0.0;
            const int64_t off = kw - d.pad;
            const int64_t lo = std::max<int64_t>(0, -off);
            const int64_t hi = std::min<int64_t>(d.ow - 1, d.w - 1 - off);
            for (int64_t n = 0; n < d.n; ++n)
              for (int64_t od = 0; od < d.od; ++od) {
                const int64_t id = od - d.pad + kd;
                if (id < 0 || id >= d.d) continue;
                for (int64_t oh = 0; oh < d.oh; ++oh) {
                  const int64_t ih = oh - d.pad + kh;
                  if (ih < 0 || ih >= d.h) continue;
                  const T* gyrow =
                      gy + (((n * d.cout + co) * d.od + od) * d.oh + oh) * d.ow;
                  const T* xs =
                      x + (((n * d.cin + ci) * d.d + id) * d.h + ih) * d.w + off;
                  for (int64_t ow = lo; ow <= hi; ++ow)
                    acc += static_cast<double>(gyrow[ow]) * xs[ow];
                }
              }
            gw[(((co * d.cin + ci) * d.kd + kd) * d.kh + kh) * d.kw + kw] +=
                static_cast<T>(acc);
          }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int64_t n = 0; n < d.n; ++n) {
        const T* gyvol = gy + (n * d.cout + co) * d.od * d.oh * d.ow;
        for (int64_t i = 0; i < d.od * d.oh * d.ow; ++i) acc += gyvol[i];
      }
      gb[co] += static_cast<T>(acc);
    }
  }
}

#define SDH_KERNEL_INST(T)                                                         \
  template void conv2d_forward<T>(const T*, const T*, const T*, T*,               \
                                  const Conv2dDims&);                             \
  template void conv2d_backward_x<T>(const T*, const T*, T*, const Conv2dDims&); \
  template void conv2d_backward_w<T>(const T*, const T*, T*, T*,                 \
                                     const Conv2dDims&);                         \
  template void conv3d_forward<T>(const T*, const T*, const T*, T*,              \
                                  const Conv3dDims&);                            \
  template void conv3d_backward_x<T>(const T*, const T*, T*, const Conv3dDims&); \
  template void conv3d_backward_w<T>(const T*, const T*, T*, T*,                 \
                                     const Conv3dDims&);

SDH_INSTANTIATE_OPS(SDH_KERNEL_INST)

}  // namespace kernels

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  check_rank(x.shape(), 4, "conv2d input");
  check_rank(w.shape(), 4, "conv2d weight");
  check_rank(b.shape(), 1, "conv2d bias");
  if (x.dim(1) != w.dim(1)) throw std::runtime_error("conv2d: channel mismatch");
  if (b.dim(0) != w.dim(0)) throw std::runtime_error("conv2d: bias mismatch");
  if (stride < 1 || pad < 0) throw std::runtime_error("conv2d: bad stride/pad");
  Conv2dDims d = Conv2dDims::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                                  w.dim(0), w.dim(2), w.dim(3), stride, pad);
  if (d.oh < 1 || d.ow < 1) throw std::runtime_error("conv2d: empty output");

  Tensor<T> y = Tensor<T>::zeros({d.n, d.cout, d.oh, d.ow});
  kernels::conv2d_forward(x.data().data(), w.data().data(), b.data().data(),
                          y.data().data(), d);
  if (grad_enabled<T>({&x, &w, &b})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, w, b, y, d]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      if (x.requires_grad())
        kernels::conv2d_backward_x(gy, w.data().data(), x.grad().data(), d);
      if (w.requires_grad() || b.requires_grad())
        kernels::conv2d_backward_w(x.data().data(), gy, w.grad().data(),
                                   b.requires_grad() ? b.grad().data() : nullptr,
                                   d);
    });
  }
  return y;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  check_rank(x.shape(), 5, "conv3d input");
  check_rank(w.shape(), 5, "conv3d weight");
  check_rank(b.shape(), 1, "conv3d bias");
  if (x.dim(1) != w.dim(1)) throw std::runtime_error("conv3d: channel mismatch");
  if (b.dim(0) != w.dim(0)) throw std::runtime_error("conv3d: bias mismatch");
  if (stride < 1 || pad < 0) throw std::runtime_error("conv3d: bad stride/pad");
  Conv3dDims d =
      Conv3dDims::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4),
                       w.dim(0), w.dim(2), w.dim(3), w.dim(4), stride, pad);
  if (d.od < 1 || d.oh < 1 || d.ow < 1)
    throw std::runtime_error("conv3d: empty output");

  Tensor<T> y = Tensor<T>::zeros({d.n, d.cout, d.od, d.oh, d.ow});
  kernels::conv3d_forward(x.data().data(), w.data().data(), b.data().data(),
                          y.data().data(), d);
  if (grad_enabled<T>({&x, &w, &b})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, w, b, y, d]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      if (x.requires_grad())
        kernels::conv3d_backward_x(gy, w.data().data(), x.grad().data(), d);
      if (w.requires_grad() || b.requires_grad())
        kernels::conv3d_backward_w(x.data().data(), gy, w.grad().data(),
                                   b.requires_grad() ? b.grad().data() : nullptr,
                                   d);
    });
  }
  return y;
}

#define SDH_CONV_INST(T)                                                       \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&, int, int);                   \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&, int, int);

SDH_INSTANTIATE_OPS(SDH_CONV_INST)

}  // namespace sdh::tensor
