#pragma once

// Serial reference implementations: plain nested loops, no threading, no
// restructuring. These are the oracles the parallel kernels are tested
// against and the baseline side of the kernel benchmarks.

#include <vector>

#include "sdh/tensor/conv_dims.hpp"

namespace sdh::tensor::reference {

template <typename T>
void conv2d(const T* x, const T* w, const T* b, T* y, const Conv2dDims& d);

template <typename T>
void conv3d(const T* x, const T* w, const T* b, T* y, const Conv3dDims& d);

template <typename T>
void maxpool2d(const T* x, T* y, int64_t n, int64_t c, int64_t h, int64_t w,
               int64_t wh, int64_t ww);

template <typename T>
void maxpool3d(const T* x, T* y, int64_t n, int64_t c, int64_t d, int64_t h,
               int64_t w, int64_t wd, int64_t wh, int64_t ww);

// y[r, o] = b[o] + sum_i x[r, i] * w[o, i]
template <typename T>
void linear(const T* x, const T* w, const T* b, T* y, int64_t rows, int64_t in,
            int64_t out);

}  // namespace sdh::tensor::reference
