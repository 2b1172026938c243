#pragma once

// OpenMP-parallel compute kernels. Parallelism is always over independent
// output (or parameter) slices with a fixed serial reduction order inside,
// so results are identical at every thread count.

#include <cstdint>

#include "sdh/tensor/conv_dims.hpp"

namespace sdh::tensor::kernels {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y, const Conv2dDims& d);
template <typename T>
void conv2d_backward_x(const T* gy, const T* w, T* gx, const Conv2dDims& d);
template <typename T>
void conv2d_backward_w(const T* x, const T* gy, T* gw, T* gb, const Conv2dDims& d);

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* b, T* y, const Conv3dDims& d);
template <typename T>
void conv3d_backward_x(const T* gy, const T* w, T* gx, const Conv3dDims& d);
template <typename T>
void conv3d_backward_w(const T* x, const T* gy, T* gw, T* gb, const Conv3dDims& d);

}  // namespace sdh::tensor::kernels
