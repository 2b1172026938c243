#pragma once

#include <cstdint>

namespace sdh::tensor {

struct Conv2dDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t stride, pad;
  int64_t oh, ow;

  static Conv2dDims make(int64_t n, int64_t cin, int64_t h, int64_t w,
                         int64_t cout, int64_t kh, int64_t kw, int64_t stride,
                         int64_t pad) {
    Conv2dDims d{n, cin, h, w, cout, kh, kw, stride, pad, 0, 0};
    d.oh = (h + 2 * pad - kh) / stride + 1;
    d.ow = (w + 2 * pad - kw) / stride + 1;
    return d;
  }
};

struct Conv3dDims {
  int64_t n, cin, d, h, w;
  int64_t cout, kd, kh, kw;
  int64_t stride, pad;
  int64_t od, oh, ow;

  static Conv3dDims make(int64_t n, int64_t cin, int64_t dd, int64_t h, int64_t w,
                         int64_t cout, int64_t kd, int64_t kh, int64_t kw,
                         int64_t stride, int64_t pad) {
    Conv3dDims d{n, cin, dd, h, w, cout, kd, kh, kw, stride, pad, 0, 0, 0};
    d.od = (dd + 2 * pad - kd) / stride + 1;
    d.oh = (h + 2 * pad - kh) / stride + 1;
    d.ow = (w + 2 * pad - kw) / stride + 1;
    return d;
  }
};

}  // namespace sdh::tensor
