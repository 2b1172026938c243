#include <cmath>
#include <cstring>
#include <limits>

#include "sdh/rng.hpp"
#include "op_common.hpp"

namespace sdh::tensor {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* who,
                    Fwd fwd, Bwd bwd) {
  check_same_shape(a.shape(), b.shape(), who);
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* py = y.data().data();
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) py[i] = fwd(pa[i], pb[i]);
  if (grad_enabled<T>({&a, &b})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([a, b, y, bwd]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* pa = a.data().data();
      const T* pb = b.data().data();
      const int64_t n = y.numel();
      if (a.requires_grad()) {
        auto ga = a.grad();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) ga[i] += bwd(gy[i], pa[i], pb[i], true);
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) gb[i] += bwd(gy[i], pa[i], pb[i], false);
      }
    });
  }
  return y;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) py[i] = fwd(px[i]);
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, bwd]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      const T* px = x.data().data();
      const T* py = y.data().data();
      auto gx = x.grad();
      const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) gx[i] += bwd(gy[i], px[i], py[i]);
    });
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T g, T, T, bool) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T g, T, T, bool lhs) { return lhs ? g : -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T g, T x, T y, bool lhs) { return lhs ? g * y : g * x; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary_op(
      x, [c](T v) { return v + c; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return unary_op(
      x, [c](T v) { return v * c; }, [c](T g, T, T) { return g * c; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T g, T v, T) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary_op(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T g, T v, T) { return v > T(0) ? g : slope * g; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T g, T, T y) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // exact erf form
  const T inv_sqrt2 = T(0.7071067811865475244);
  const T inv_sqrt2pi = T(0.3989422804014326779);
  return unary_op(
      x,
      [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [=](T g, T v, T) {
        T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return g * (cdf + v * pdf);
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw std::runtime_error("dropout: p must be in [0,1)");
  if (!train || p == 0.0) {
    // identity pass-through, still differentiable
    return add_scalar(x, T(0));
  }
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t n = y.numel();
  const T scale = T(1.0 / (1.0 - p));
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    py[i] = hash_uniform(seed, static_cast<uint64_t>(i)) < p ? T(0) : px[i] * scale;
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, p, seed, scale]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
      const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i)
        if (hash_uniform(seed, static_cast<uint64_t>(i)) >= p)
          gx[i] += gy[i] * scale;
    });
  }
  return y;
}

namespace {


struct AxisSplit {
  Shape out_shape;          // with reduced axes kept as size 1
  std::vector<int64_t> in_strides;
  std::vector<bool> reduced;
};

AxisSplit make_split(const Shape& shape, const std::vector<int>& axes,
                     const char* who) {
  AxisSplit s;
  s.out_shape = shape;
  s.reduced.assign(shape.size(), false);
  for (int a : axes) {
    if (a < 0 || static_cast<size_t>(a) >= shape.size())
      throw std::runtime_error(std::string(who) + ": axis out of range");
    if (s.reduced[static_cast<size_t>(a)])
      throw std::runtime_error(std::string(who) + ": duplicate axis");
    s.reduced[static_cast<size_t>(a)] = true;
    s.out_shape[static_cast<size_t>(a)] = 1;
  }
  s.in_strides.assign(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s.in_strides[static_cast<size_t>(i)] =
        s.in_strides[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
  return s;
}

// decompose an output flat index into a base input offset (reduced axes at 0)
int64_t out_to_in_base(int64_t out_idx, const Shape& out_shape,
                       const AxisSplit& s) {
  int64_t base = 0;
  int64_t rem = out_idx;
  for (int i = static_cast<int>(out_shape.size()) - 1; i >= 0; --i) {
    int64_t coord = rem % out_shape[static_cast<size_t>(i)];
    rem /= out_shape[static_cast<size_t>(i)];
    base += coord * s.in_strides[static_cast<size_t>(i)];
  }
  return base;
}

// visit every input flat index belonging to one output cell
template <typename Fn>
void walk_reduced(const Shape& in_shape, const AxisSplit& s, int64_t base, Fn fn) {
  std::vector<int64_t> red_axes;
  for (size_t i = 0; i < in_shape.size(); ++i)
    if (s.reduced[i]) red_axes.push_back(static_cast<int64_t>(i));
  std::vector<int64_t> idx(red_axes.size(), 0);
  for (;;) {
    int64_t off = base;
    for (size_t k = 0; k < red_axes.size(); ++k)
      off += idx[k] * s.in_strides[static_cast<size_t>(red_axes[k])];
    fn(off);
    int k = static_cast<int>(red_axes.size()) - 1;
    for (; k >= 0; --k) {
      if (++idx[static_cast<size_t>(k)] <
          in_shape[static_cast<size_t>(red_axes[static_cast<size_t>(k)])])
        break;
      idx[static_cast<size_t>(k)] = 0;
    }
    if (k < 0) break;
  }
}

}  // namespace

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<int>& axes) {
  AxisSplit s = make_split(x.shape(), axes, "reduce_sum");
  Tensor<T> y = Tensor<T>::zeros(s.out_shape);
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t on = y.numel();
  const Shape in_shape = x.shape();
  const Shape out_shape = s.out_shape;
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < on; ++o) {
    double acc = 0.0;
    int64_t base = out_to_in_base(o, out_shape, s);
    walk_reduced(in_shape, s, base, [&](int64_t i) { acc += px[i]; });
    py[o] = static_cast<T>(acc);
  }
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, s, out_shape]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
      const Shape in_shape = x.shape();
      const int64_t on = y.numel();
#pragma omp parallel for schedule(static)
      for (int64_t o = 0; o < on; ++o) {
        int64_t base = out_to_in_base(o, out_shape, s);
        walk_reduced(in_shape, s, base, [&](int64_t i) { gx[i] += gy[o]; });
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<int>& axes) {
  AxisSplit s = make_split(x.shape(), axes, "reduce_mean");
  int64_t count = shape_numel(x.shape()) / shape_numel(s.out_shape);
  Tensor<T> sum = reduce_sum(x, axes);
  return mul_scalar(sum, T(1.0 / static_cast<double>(count)));
}

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, const std::vector<int>& axes) {
  AxisSplit s = make_split(x.shape(), axes, "reduce_max");
  Tensor<T> y = Tensor<T>::zeros(s.out_shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(y.numel()));
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t on = y.numel();
  const Shape in_shape = x.shape();
  const Shape out_shape = s.out_shape;
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < on; ++o) {
    int64_t base = out_to_in_base(o, out_shape, s);
    T best = -std::numeric_limits<T>::infinity();
    int64_t best_i = -1;
    walk_reduced(in_shape, s, base, [&](int64_t i) {
      if (px[i] > best) {
        best = px[i];
        best_i = i;
      }
    });
    py[o] = best;
    (*argmax)[static_cast<size_t>(o)] = best_i;
  }
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, argmax]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T* gy = y.grad().data();
      auto gx = x.grad();
      const int64_t on = y.numel();
#pragma omp parallel for schedule(static)
      for (int64_t o = 0; o < on; ++o)
        gx[(*argmax)[static_cast<size_t>(o)]] += gy[o];
    });
  }
  return y;
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& target) {
  const Shape& in = x.shape();
  if (in.size() != target.size())
    throw std::runtime_error("expand: rank mismatch " + shape_str(in) + " vs " +
                             shape_str(target));
  std::vector<int> expanded_axes;
  for (size_t i = 0; i < in.size(); ++i) {
    if (in[i] == target[i]) continue;
    if (in[i] != 1)
      throw std::runtime_error("expand: axis " + std::to_string(i) +
                               " must be 1 or equal");
    expanded_axes.push_back(static_cast<int>(i));
  }
  // strides of input mapped onto target coordinates, 0 on expanded axes
  std::vector<int64_t> in_strides(in.size(), 1);
  for (int i = static_cast<int>(in.size()) - 2; i >= 0; --i)
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i) + 1] * in[static_cast<size_t>(i) + 1];
  std::vector<int64_t> eff(in.size());
  for (size_t i = 0; i < in.size(); ++i)
    eff[i] = in[i] == 1 && target[i] != 1 ? 0 : in_strides[i];

  Tensor<T> y = Tensor<T>::zeros(target);
  const T* px = x.data().data();
  T* py = y.data().data();
  const int64_t n = y.numel();
  const Shape tgt = target;
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int i = static_cast<int>(tgt.size()) - 1; i >= 0; --i) {
      int64_t coord = rem % tgt[static_cast<size_t>(i)];
      rem /= tgt[static_cast<size_t>(i)];
      src += coord * eff[static_cast<size_t>(i)];
    }
    py[o] = px[src];
  }
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y, expanded_axes]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      // gradient sums over the expanded axes
      AxisSplit s = make_split(y.shape(), expanded_axes, "expand");
      auto gx = x.grad();
      const T* gy = y.grad().data();
      const Shape in_shape = y.shape();
      const Shape out_shape = s.out_shape;
      const int64_t on = shape_numel(out_shape);
#pragma omp parallel for schedule(static)
      for (int64_t o = 0; o < on; ++o) {
        double acc = 0.0;
        int64_t base = out_to_in_base(o, out_shape, s);
        walk_reduced(in_shape, s, base, [&](int64_t i) { acc += gy[i]; });
        gx[o] += static_cast<T>(acc);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const T* px = x.data().data();
  const int64_t n = x.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += px[i];  // fixed order
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc));
  if (grad_enabled<T>({&x})) {
    y.set_requires_grad(true);
    Tape<T>::active()->record([x, y]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const T g = y.grad()[0];
      auto gx = x.grad();
      const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1.0 / static_cast<double>(x.numel())));
}

#define SDH_ELEMENTWISE_INST(T)                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                    \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                             \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                    \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                          \
  template Tensor<T> gelu<T>(const Tensor<T>&);                             \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, uint64_t);  \
  template Tensor<T> expand<T>(const Tensor<T>&, const Shape&);             \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&, const std::vector<int>&); \
  template Tensor<T> reduce_mean<T>(const Tensor<T>&, const std::vector<int>&); \
  template Tensor<T> reduce_max<T>(const Tensor<T>&, const std::vector<int>&); \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                          \
  template Tensor<T> mean_all<T>(const Tensor<T>&);

SDH_INSTANTIATE_OPS(SDH_ELEMENTWISE_INST)

}  // namespace sdh::tensor
