#include <limits>
#include <memory>

#include "op_common.hpp"

namespace sdh::tensor {

namespace {

template <typename T>
void pool_backward(const Tensor<T>& x, Tensor<T>& y,
                   std::shared_ptr<std::vector<int64_t>> argmax, int64_t planes,
                   int64_t in_plane, int64_t out_plane) {
  if (!grad_enabled<T>({&x})) return;
  y.set_requires_grad(true);
  Tape<T>::active()->record([x, y, argmax, planes, in_plane, out_plane]() mutable {
    if (!y.has_grad() || !x.requires_grad()) return;
    const T* gy = y.grad().data();
    auto gx = x.grad();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < planes; ++p) {
      const int64_t* ap = argmax->data() + p * out_plane;
      const T* gyp = gy + p * out_plane;
      T* gxp = gx.data() + p * in_plane;
      for (int64_t o = 0; o < out_plane; ++o) gxp[ap[o]] += gyp[o];
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int window_h, int window_w) {
  check_rank(x.shape(), 4, "maxpool2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window_h < 1 || window_w < 1 || window_h > h || window_w > w)
    throw std::runtime_error("maxpool2d: window larger than input");
  const int64_t oh = h / window_h, ow = w / window_w;  // floor semantics
  const int64_t planes = n * c, in_plane = h * w, out_plane = oh * ow;

  Tensor<T> y = Tensor<T>::zeros({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(planes * out_plane));
  const T* px = x.data().data();
  T* py = y.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = px + p * in_plane;
    T* yp = py + p * out_plane;
    int64_t* ap = argmax->data() + p * out_plane;
    for (int64_t a = 0; a < oh; ++a)
      for (int64_t b = 0; b < ow; ++b) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_i = -1;
        for (int64_t dy = 0; dy < window_h; ++dy)
          for (int64_t dx = 0; dx < window_w; ++dx) {
            int64_t i = (a * window_h + dy) * w + b * window_w + dx;
            if (xp[i] > best) {
              best = xp[i];
              best_i = i;
            }
          }
        yp[a * ow + b] = best;
        ap[a * ow + b] = best_i;
      }
  }
  pool_backward(x, y, argmax, planes, in_plane, out_plane);
  return y;
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, const std::array<int, 3>& window) {
  check_rank(x.shape(), 5, "maxpool3d");
  const int64_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int64_t wd = window[0], wh = window[1], ww = window[2];
  if (wd < 1 || wh < 1 || ww < 1 || wd > d || wh > h || ww > w)
    throw std::runtime_error("maxpool3d: window larger than input");
  const int64_t od = d / wd, oh = h / wh, ow = w / ww;
  const int64_t planes = n * c, in_plane = d * h * w, out_plane = od * oh * ow;

  Tensor<T> y = Tensor<T>::zeros({n, c, od, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(planes * out_plane));
  const T* px = x.data().data();
  T* py = y.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = px + p * in_plane;
    T* yp = py + p * out_plane;
    int64_t* ap = argmax->data() + p * out_plane;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t a = 0; a < oh; ++a)
        for (int64_t b = 0; b < ow; ++b) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_i = -1;
          for (int64_t dz = 0; dz < wd; ++dz)
            for (int64_t dy = 0; dy < wh; ++dy)
              for (int64_t dx = 0; dx < ww; ++dx) {
                int64_t i = ((z * wd + dz) * h + a * wh + dy) * w + b * ww + dx;
                if (xp[i] > best) {
                  best = xp[i];
                  best_i = i;
                }
              }
          yp[(z * oh + a) * ow + b] = best;
          ap[(z * oh + a) * ow + b] = best_i;
        }
  }
  pool_backward(x, y, argmax, planes, in_plane, out_plane);
  return y;
}

#define SDH_POOL_INST(T)                                                \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int);          \
  template Tensor<T> maxpool3d<T>(const Tensor<T>&, const std::array<int, 3>&);

SDH_INSTANTIATE_OPS(SDH_POOL_INST)

}  // namespace sdh::tensor
