#include <algorithm>
#include <cmath>

#include "op_common.hpp"

namespace sdh::tensor {

namespace {

struct Axis {
  int64_t in = 0;
  double scale = 0.0;  // align-corners: (in-1)/(out-1)
};

inline Axis make_axis(int64_t in, int64_t out, const char* who) {
  if (out < 1) throw std::runtime_error(std::string(who) + ": empty output dim");
  Axis a;
  a.in = in;
  a.scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  return a;
}

inline void locate(const Axis& a, int64_t o, int64_t& i0, int64_t& i1, double& w) {
  double f = o * a.scale;
  i0 = static_cast<int64_t>(f);
  i1 = std::min<int64_t>(i0 + 1, a.in - 1);
  w = f - static_cast<double>(i0);
}

}  // namespace

template <typename T>
Tensor<T> interpolate2d(const Tensor<T>& x, int64_t oh, int64_t ow) {
  check_rank(x.shape(), 4, "interpolate2d");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Axis ah = make_axis(H, oh, "interpolate2d");
  Axis aw = make_axis(W, ow, "interpolate2d");
  Tensor<T> y = Tensor<T>::zeros({N, C, oh, ow});
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = px + p * H * W;
    T* yp = py + p * oh * ow;
    for (int64_t a = 0; a < oh; ++a) {
      int64_t y0, y1;
      double wy;
      locate(ah, a, y0, y1, wy);
      for (int64_t b = 0; b < ow; ++b) {
        int64_t x0, x1;
        double wx;
        locate(aw, b, x0, x1, wx);
        double v00 = xp[y0 * W + x0], v01 = xp[y0 * W + x1];
        double v10 = xp[y1 * W + x0], v11 = xp[y1 * W + x1];
        double top = v00 + (v01 - v00) * wx;
        double bot = v10 + (v11 - v10) * wx;
        yp[a * ow + b] = static_cast<T>(top + (bot - top) * wy);
      }
    }
  }
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, ah, aw, planes, H, W, oh, ow]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
#pragma omp parallel for schedule(static)
      for (int64_t p = 0; p < planes; ++p) {
        const T* gyp = gy + p * oh * ow;
        T* gxp = gx.data() + p * H * W;
        for (int64_t a = 0; a < oh; ++a) {
          int64_t y0, y1;
          double wy;
          locate(ah, a, y0, y1, wy);
          for (int64_t b = 0; b < ow; ++b) {
            int64_t x0, x1;
            double wx;
            locate(aw, b, x0, x1, wx);
            const T g = gyp[a * ow + b];
            gxp[y0 * W + x0] += static_cast<T>(g * (1 - wy) * (1 - wx));
            gxp[y0 * W + x1] += static_cast<T>(g * (1 - wy) * wx);
            gxp[y1 * W + x0] += static_cast<T>(g * wy * (1 - wx));
            gxp[y1 * W + x1] += static_cast<T>(g * wy * wx);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> interpolate3d(const Tensor<T>& x, int64_t od, int64_t oh, int64_t ow) {
  check_rank(x.shape(), 5, "interpolate3d");
  const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  Axis ad = make_axis(D, od, "interpolate3d");
  Axis ah = make_axis(H, oh, "interpolate3d");
  Axis aw = make_axis(W, ow, "interpolate3d");
  Tensor<T> y = Tensor<T>::zeros({N, C, od, oh, ow});
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = px + p * D * H * W;
    T* yp = py + p * od * oh * ow;
    for (int64_t c = 0; c < od; ++c) {
      int64_t z0, z1;
      double wz;
      locate(ad, c, z0, z1, wz);
      for (int64_t a = 0; a < oh; ++a) {
        int64_t y0, y1;
        double wy;
        locate(ah, a, y0, y1, wy);
        for (int64_t b = 0; b < ow; ++b) {
          int64_t x0, x1;
          double wx;
          locate(aw, b, x0, x1, wx);
          auto at = [&](int64_t z, int64_t yy, int64_t xx) {
            return static_cast<double>(xp[(z * H + yy) * W + xx]);
          };
          double c00 = at(z0, y0, x0) + (at(z0, y0, x1) - at(z0, y0, x0)) * wx;
          double c01 = at(z0, y1, x0) + (at(z0, y1, x1) - at(z0, y1, x0)) * wx;
          double c10 = at(z1, y0, x0) + (at(z1, y0, x1) - at(z1, y0, x0)) * wx;
          double c11 = at(z1, y1, x0) + (at(z1, y1, x1) - at(z1, y1, x0)) * wx;
          double c0 = c00 + (c01 - c00) * wy;
          double c1 = c10 + (c11 - c10) * wy;
          yp[(c * oh + a) * ow + b] = static_cast<T>(c0 + (c1 - c0) * wz);
        }
      }
    }
  }
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, ad, ah, aw, planes, D, H, W, od, oh, ow]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
#pragma omp parallel for schedule(static)
      for (int64_t p = 0; p < planes; ++p) {
        const T* gyp = gy + p * od * oh * ow;
        T* gxp = gx.data() + p * D * H * W;
        for (int64_t c = 0; c < od; ++c) {
          int64_t z0, z1;
          double wz;
          locate(ad, c, z0, z1, wz);
          for (int64_t a = 0; a < oh; ++a) {
            int64_t y0, y1;
            double wy;
            locate(ah, a, y0, y1, wy);
            for (int64_t b = 0; b < ow; ++b) {
              int64_t x0, x1;
              double wx;
              locate(aw, b, x0, x1, wx);
              const double g = gyp[(c * oh + a) * ow + b];
              gxp[(z0 * H + y0) * W + x0] += static_cast<T>(g * (1 - wz) * (1 - wy) * (1 - wx));
              gxp[(z0 * H + y0) * W + x1] += static_cast<T>(g * (1 - wz) * (1 - wy) * wx);
              gxp[(z0 * H + y1) * W + x0] += static_cast<T>(g * (1 - wz) * wy * (1 - wx));
              gxp[(z0 * H + y1) * W + x1] += static_cast<T>(g * (1 - wz) * wy * wx);
              gxp[(z1 * H + y0) * W + x0] += static_cast<T>(g * wz * (1 - wy) * (1 - wx));
              gxp[(z1 * H + y0) * W + x1] += static_cast<T>(g * wz * (1 - wy) * wx);
              gxp[(z1 * H + y1) * W + x0] += static_cast<T>(g * wz * wy * (1 - wx));
              gxp[(z1 * H + y1) * W + x1] += static_cast<T>(g * wz * wy * wx);
            }
          }
        }
      }
    });
  }
  return y;
}

#define SDH_INTERP_INST(T)                                                   \
  template Tensor<T> interpolate2d<T>(const Tensor<T>&, int64_t, int64_t);   \
  template Tensor<T> interpolate3d<T>(const Tensor<T>&, int64_t, int64_t,    \
                                      int64_t);

SDH_INSTANTIATE_OPS(SDH_INTERP_INST)

}  // namespace sdh::tensor
