#include "sdh/tensor/reference.hpp"

#include <algorithm>
#include <limits>

namespace sdh::tensor::reference {

template <typename T>
void conv2d(const T* x, const T* w, const T* b, T* y, const Conv2dDims& d) {
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t oh = 0; oh < d.oh; ++oh)
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          T acc = b ? b[co] : T(0);
          for (int64_t ci = 0; ci < d.cin; ++ci)
            for (int64_t kh = 0; kh < d.kh; ++kh)
              for (int64_t kw = 0; kw < d.kw; ++kw) {
                int64_t ih = oh * d.stride - d.pad + kh;
                int64_t iw = ow * d.stride - d.pad + kw;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                acc += x[((n * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((co * d.cin + ci) * d.kh + kh) * d.kw + kw];
              }
          y[((n * d.cout + co) * d.oh + oh) * d.ow + ow] = acc;
        }
}

template <typename T>
void conv3d(const T* x, const T* w, const T* b, T* y, const Conv3dDims& d) {
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t od = 0; od < d.od; ++od)
        for (int64_t oh = 0; oh < d.oh; ++oh)
          for (int64_t ow = 0; ow < d.ow; ++ow) {
            T acc = b ? b[co] : T(0);
            for (int64_t ci = 0; ci < d.cin; ++ci)
              for (int64_t kd = 0; kd < d.kd; ++kd)
                for (int64_t kh = 0; kh < d.kh; ++kh)
                  for (int64_t kw = 0; kw < d.kw; ++kw) {
                    int64_t id = od * d.stride - d.pad + kd;
                    int64_t ih = oh * d.stride - d.pad + kh;
                    int64_t iw = ow * d.stride - d.pad + kw;
                    if (id < 0 || id >= d.d || ih < 0 || ih >= d.h || iw < 0 ||
                        iw >= d.w)
                      continue;
                    acc += x[(((n * d.cin + ci) * d.d + id) * d.h + ih) * d.w + iw] *
                           w[(((co * d.cin + ci) * d.kd + kd) * d.kh + kh) * d.kw + kw];
                  }
            y[(((n * d.cout + co) * d.od + od) * d.oh + oh) * d.ow + ow] = acc;
          }
}

template <typename T>
void maxpool2d(const T* x, T* y, int64_t n, int64_t c, int64_t h, int64_t w,
               int64_t wh, int64_t ww) {
  int64_t oh = h / wh, ow = w / ww;
  for (int64_t i = 0; i < n * c; ++i)
    for (int64_t a = 0; a < oh; ++a)
      for (int64_t b2 = 0; b2 < ow; ++b2) {
        T best = -std::numeric_limits<T>::infinity();
        for (int64_t dy = 0; dy < wh; ++dy)
          for (int64_t dx = 0; dx < ww; ++dx)
            best = std::max(best, x[(i * h + a * wh + dy) * w + b2 * ww + dx]);
        y[(i * oh + a) * ow + b2] = best;
      }
}

template <typename T>
void maxpool3d(const T* x, T* y, int64_t n, int64_t c, int64_t d, int64_t h,
               int64_t w, int64_t wd, int64_t wh, int64_t ww) {
  int64_t od = d / wd, oh = h / wh, ow = w / ww;
  for (int64_t i = 0; i < n * c; ++i)
    for (int64_t z = 0; z < od; ++z)
      for (int64_t a = 0; a < oh; ++a)
        for (int64_t b2 = 0; b2 < ow; ++b2) {
          T best = -std::numeric_limits<T>::infinity();
          for (int64_t dz = 0; dz < wd; ++dz)
            for (int64_t dy = 0; dy < wh; ++dy)
              for (int64_t dx = 0; dx < ww; ++dx)
                best = std::max(
                    best, x[((i * d + z * wd + dz) * h + a * wh + dy) * w +
                            b2 * ww + dx]);
          y[((i * od + z) * oh + a) * ow + b2] = best;
        }
}

template <typename T>
void linear(const T* x, const T* w, const T* b, T* y, int64_t rows, int64_t in,
            int64_t out) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t o = 0; o < out; ++o) {
      T acc = b ? b[o] : T(0);
      for (int64_t i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
      y[r * out + o] = acc;
    }
}

#define SDH_INSTANTIATE_REF(T)                                                   \
  template void conv2d<T>(const T*, const T*, const T*, T*, const Conv2dDims&); \
  template void conv3d<T>(const T*, const T*, const T*, T*, const Conv3dDims&); \
  template void maxpool2d<T>(const T*, T*, int64_t, int64_t, int64_t, int64_t,  \
                             int64_t, int64_t);                                  \
  template void maxpool3d<T>(const T*, T*, int64_t, int64_t, int64_t, int64_t,  \
                             int64_t, int64_t, int64_t, int64_t);                \
  template void linear<T>(const T*, const T*, const T*, T*, int64_t, int64_t,   \
                          int64_t);

SDH_INSTANTIATE_REF(float)
SDH_INSTANTIATE_REF(double)

}  // namespace sdh::tensor::reference
