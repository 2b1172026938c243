#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdh/rng.hpp"
#include "sdh/tensor/ops.hpp"
#include "testutil.hpp"

// Central-finite-difference checks for every differentiable op, in float64
// (rel err < 1e-5) and float32 (rel err < 1e-3), over >= 20 random shapes.

using namespace sdh;
using namespace sdh::tensor;
using testutil::grad_check;
using testutil::GradCheckResult;
using testutil::random_tensor;
using testutil::random_tensor_nonkink;

namespace {

template <typename T>
Tensor<T> fixed_weights(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return Tensor<T>::from(shape, std::move(v));
}

// weighted scalar reduction so every output coordinate matters
template <typename T>
Tensor<T> weighted(const Tensor<T>& y, uint64_t seed = 7) {
  return sum_all(mul(y, fixed_weights<T>(y.shape(), seed)));
}

template <typename T>
struct Tolerance;
template <>
struct Tolerance<double> {
  static constexpr double h = 1e-6;
  static constexpr double rel = 1e-5;
};
template <>
struct Tolerance<float> {
  static constexpr double h = 5e-3;
  static constexpr double rel = 1e-3;
};

// one op over `trials` random shapes produced by `make`, which fills
// leaves and returns the forward closure
template <typename T, typename Make>
void run_op_check(const char* name, Make make, int trials = 20,
                  double h_override = 0.0) {
  const double h = h_override > 0.0 && sizeof(T) == 4 ? h_override
                                                      : Tolerance<T>::h;
  for (int t = 0; t < trials; ++t) {
    Rng rng(1000 + static_cast<uint64_t>(t) * 17);
    std::vector<Tensor<T>> leaves;
    std::function<Tensor<T>()> fwd = make(rng, leaves);
    GradCheckResult r = grad_check<T>(fwd, leaves, h, -1,
                                      static_cast<uint64_t>(t));
    INFO(name, " trial ", t, " max_rel_err=", r.max_rel_err);
    CHECK(r.max_rel_err < Tolerance<T>::rel);
  }
}

template <typename T>
Shape small_shape(Rng& rng, size_t rank_lo = 1, size_t rank_hi = 3) {
  size_t rank = rank_lo + rng.uniform_int(rank_hi - rank_lo + 1);
  Shape s;
  for (size_t i = 0; i < rank; ++i)
    s.push_back(1 + static_cast<int64_t>(rng.uniform_int(5)));
  return s;
}

}  // namespace

TEST_CASE_TEMPLATE("grad: elementwise binary ops", T, double, float) {
  run_op_check<T>("add", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng), random_tensor<T>(s, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(add(leaves[0], leaves[1])); });
  });
  run_op_check<T>("sub", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng), random_tensor<T>(s, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(sub(leaves[0], leaves[1])); });
  });
  run_op_check<T>("mul", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng), random_tensor<T>(s, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(mul(leaves[0], leaves[1])); });
  });
}

TEST_CASE_TEMPLATE("grad: scalar ops and activations", T, double, float) {
  run_op_check<T>("add_scalar", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(add_scalar(leaves[0], T(0.7))); });
  });
  run_op_check<T>("mul_scalar", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(mul_scalar(leaves[0], T(-1.3))); });
  });
  run_op_check<T>("relu", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor_nonkink<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(relu(leaves[0])); });
  });
  run_op_check<T>("leaky_relu", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor_nonkink<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(leaky_relu(leaves[0], T(0.01))); });
  });
  run_op_check<T>("sigmoid", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng, -3, 3)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(sigmoid(leaves[0])); });
  });
  run_op_check<T>("gelu", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng, -2, 2)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(gelu(leaves[0])); });
  });
  run_op_check<T>("dropout", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(dropout(leaves[0], 0.3, true, 1234)); });
  });
}

TEST_CASE_TEMPLATE("grad: reductions and expand", T, double, float) {
  run_op_check<T>("reduce_sum", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng, 2, 3);
    leaves = {random_tensor<T>(s, rng)};
    int axis = static_cast<int>(rng.uniform_int(s.size()));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(reduce_sum(leaves[0], {axis})); });
  });
  run_op_check<T>("reduce_mean", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng, 2, 3);
    leaves = {random_tensor<T>(s, rng)};
    int axis = static_cast<int>(rng.uniform_int(s.size()));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(reduce_mean(leaves[0], {axis})); });
  });
  run_op_check<T>("reduce_max", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng, 2, 3);
    // well-separated values keep the argmax stable under the probe
    std::vector<T> v(static_cast<size_t>(shape_numel(s)));
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = static_cast<T>(0.37 * static_cast<double>(i) +
                            rng.uniform(0.0, 0.05));
    Rng shuf(rng.next_u64());
    shuf.shuffle(v);
    leaves = {Tensor<T>::from(s, std::move(v))};
    int axis = static_cast<int>(rng.uniform_int(s.size()));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(reduce_max(leaves[0], {axis})); });
  });
  run_op_check<T>("expand", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t a = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t b = 2 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({a, 1, 3}, rng)};
    Shape target = {a, b, 3};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(expand(leaves[0], target)); });
  });
  run_op_check<T>("mean_all", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng), rng)};
    return std::function<Tensor<T>()>([=]() { return mean_all(leaves[0]); });
  });
}

TEST_CASE_TEMPLATE("grad: shape ops", T, double, float) {
  run_op_check<T>("reshape", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t a = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t b = 1 + static_cast<int64_t>(rng.uniform_int(4));
    leaves = {random_tensor<T>({a, b, 2}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(reshape(leaves[0], {a * b, 2})); });
  });
  run_op_check<T>("transpose", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = {1 + static_cast<int64_t>(rng.uniform_int(3)),
               1 + static_cast<int64_t>(rng.uniform_int(3)),
               1 + static_cast<int64_t>(rng.uniform_int(3))};
    leaves = {random_tensor<T>(s, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(transpose(leaves[0], {2, 0, 1})); });
  });
  run_op_check<T>("concat", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t a = 1 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({2, a, 3}, rng), random_tensor<T>({2, a + 1, 3}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(concat<T>({leaves[0], leaves[1]}, 1));
    });
  });
  run_op_check<T>("narrow", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t a = 3 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({2, a, 2}, rng)};
    int64_t start = static_cast<int64_t>(rng.uniform_int(2));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(narrow(leaves[0], 1, start, 2)); });
  });
  run_op_check<T>("roll_hw", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>({2, 4, 4, 3}, rng)};
    int64_t sh = static_cast<int64_t>(rng.uniform_int(4));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(roll_hw(leaves[0], sh, 1)); });
  });
}

TEST_CASE_TEMPLATE("grad: linear and bmm", T, double, float) {
  run_op_check<T>("linear", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t rows = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t in = 1 + static_cast<int64_t>(rng.uniform_int(5));
    int64_t out = 1 + static_cast<int64_t>(rng.uniform_int(5));
    leaves = {random_tensor<T>({rows, in}, rng), random_tensor<T>({out, in}, rng),
              random_tensor<T>({out}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(linear(leaves[0], leaves[1], leaves[2])); });
  });
  run_op_check<T>("bmm_nn", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t g = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t m = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(4));
    leaves = {random_tensor<T>({g, m, k}, rng), random_tensor<T>({g, k, n}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(bmm(leaves[0], leaves[1], false)); });
  });
  run_op_check<T>("bmm_nt", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t g = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t m = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(4));
    leaves = {random_tensor<T>({g, m, k}, rng), random_tensor<T>({g, n, k}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(bmm(leaves[0], leaves[1], true)); });
  });
}

TEST_CASE_TEMPLATE("grad: convolutions", T, double, float) {
  run_op_check<T>("conv2d", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t cout = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t hw = 4 + static_cast<int64_t>(rng.uniform_int(4));
    leaves = {random_tensor<T>({n, cin, hw, hw}, rng),
              random_tensor<T>({cout, cin, 3, 3}, rng),
              random_tensor<T>({cout}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(conv2d(leaves[0], leaves[1], leaves[2], 1, 1));
    });
  });
  run_op_check<T>("conv3d", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t cout = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t hw = 3 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({1, cin, d, hw, hw}, rng),
              random_tensor<T>({cout, cin, 3, 3, 3}, rng),
              random_tensor<T>({cout}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(conv3d(leaves[0], leaves[1], leaves[2], 1, 1));
    });
  });
}

TEST_CASE_TEMPLATE("grad: pooling", T, double, float) {
  auto separated = [](const Shape& s, Rng& rng) {
    std::vector<T> v(static_cast<size_t>(shape_numel(s)));
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = static_cast<T>(0.37 * static_cast<double>(i) + rng.uniform(0.0, 0.05));
    Rng shuf(rng.next_u64());
    shuf.shuffle(v);
    return Tensor<T>::from(s, std::move(v));
  };
  run_op_check<T>("maxpool2d", [&](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t hw = 4 + 2 * static_cast<int64_t>(rng.uniform_int(3));
    leaves = {separated({1, 2, hw, hw}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(maxpool2d(leaves[0], 2, 2)); });
  });
  run_op_check<T>("maxpool3d", [&](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t d = 2 + 2 * static_cast<int64_t>(rng.uniform_int(2));
    leaves = {separated({1, 1, d, 4, 4}, rng)};
    std::array<int, 3> window = rng.bernoulli(0.5) ? std::array<int, 3>{1, 2, 2}
                                                   : std::array<int, 3>{2, 2, 2};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(maxpool3d(leaves[0], window)); });
  });
}

TEST_CASE_TEMPLATE("grad: normalization", T, double, float) {
  run_op_check<T>("batchnorm_train", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t c = 1 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({3, c, 4, 4}, rng), random_tensor<T>({c}, rng, 0.5, 1.5),
              random_tensor<T>({c}, rng)};
    auto rm = std::make_shared<Tensor<T>>(Tensor<T>::zeros({c}));
    auto rv = std::make_shared<Tensor<T>>(Tensor<T>::full({c}, T(1)));
    return std::function<Tensor<T>()>([=]() {
      return weighted(batchnorm(leaves[0], leaves[1], leaves[2], *rm, *rv, true));
    });
  }, 20, 1e-3);
  run_op_check<T>("batchnorm_eval", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t c = 1 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({2, c, 3, 3}, rng), random_tensor<T>({c}, rng, 0.5, 1.5),
              random_tensor<T>({c}, rng)};
    auto rm = std::make_shared<Tensor<T>>(random_tensor<T>({c}, rng, -0.2, 0.2));
    auto rv = std::make_shared<Tensor<T>>(random_tensor<T>({c}, rng, 0.5, 1.5));
    return std::function<Tensor<T>()>([=]() {
      return weighted(batchnorm(leaves[0], leaves[1], leaves[2], *rm, *rv, false));
    });
  });
  run_op_check<T>("layer_norm", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t f = 2 + static_cast<int64_t>(rng.uniform_int(5));
    int64_t rows = 1 + static_cast<int64_t>(rng.uniform_int(4));
    // spread values keep the row variance away from zero, where the
    // normalization curvature would swamp a finite-difference probe
    std::vector<T> v(static_cast<size_t>(rows * f));
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = static_cast<T>(0.5 * static_cast<double>(i % static_cast<size_t>(f)) +
                            rng.uniform(-0.1, 0.1));
    leaves = {Tensor<T>::from({rows, f}, std::move(v)),
              random_tensor<T>({f}, rng, 0.5, 1.5), random_tensor<T>({f}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(layer_norm(leaves[0], leaves[1], leaves[2], T(1e-5)));
    });
  }, 20, 1e-3);
  run_op_check<T>("softmax", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>(small_shape<T>(rng, 2, 3), rng, -2, 2)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(softmax_lastaxis(leaves[0])); });
  });
  run_op_check<T>("attn_softmax_masked", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    // 4 windows of a 2x2-window 4x4 grid, shift 1
    auto mask = build_shift_mask<T>(4, 4, 2, 1);
    leaves = {random_tensor<T>({4, 4, 4}, rng, -2, 2)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(attn_softmax(leaves[0], mask, 4, 1)); });
  });
}

TEST_CASE_TEMPLATE("grad: interpolation", T, double, float) {
  run_op_check<T>("interpolate2d", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t h = 2 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t w = 2 + static_cast<int64_t>(rng.uniform_int(4));
    leaves = {random_tensor<T>({1, 2, h, w}, rng)};
    int64_t oh = 2 + static_cast<int64_t>(rng.uniform_int(6));
    int64_t ow = 2 + static_cast<int64_t>(rng.uniform_int(6));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(interpolate2d(leaves[0], oh, ow)); });
  });
  run_op_check<T>("interpolate3d", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(3));
    leaves = {random_tensor<T>({1, 1, d, 3, 3}, rng)};
    int64_t od = 2 + static_cast<int64_t>(rng.uniform_int(4));
    return std::function<Tensor<T>()>(
        [=]() { return weighted(interpolate3d(leaves[0], od, 5, 4)); });
  });
}

TEST_CASE_TEMPLATE("grad: window attention and patch ops", T, double, float) {
  run_op_check<T>("window_msa", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    const int64_t C = 4, m = 2;
    int64_t heads = rng.bernoulli(0.5) ? 1 : 2;
    int64_t shift = rng.bernoulli(0.5) ? 0 : m / 2;
    leaves = {random_tensor<T>({1, 4, 4, C}, rng),
              random_tensor<T>({3 * C, C}, rng), random_tensor<T>({3 * C}, rng),
              random_tensor<T>({C, C}, rng), random_tensor<T>({C}, rng)};
    return std::function<Tensor<T>()>([=]() {
      WindowMsaParams<T> p{leaves[1], leaves[2], leaves[3], leaves[4]};
      return weighted(window_msa(leaves[0], p, m, heads, shift));
    });
  }, 12);
  run_op_check<T>("patch_partition", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    leaves = {random_tensor<T>({1, 4, 4, 2}, rng)};
    return std::function<Tensor<T>()>(
        [=]() { return weighted(patch_partition(leaves[0], 2)); });
  });
  run_op_check<T>("patch_merge", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    const int64_t C = 2;
    leaves = {random_tensor<T>({1, 4, 4, C}, rng),
              random_tensor<T>({2 * C, 4 * C}, rng), random_tensor<T>({2 * C}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(patch_merge(leaves[0], leaves[1], leaves[2]));
    });
  });
  run_op_check<T>("patch_expand", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    const int64_t C = 4;
    leaves = {random_tensor<T>({1, 2, 2, C}, rng),
              random_tensor<T>({2 * C, C}, rng), random_tensor<T>({2 * C}, rng)};
    return std::function<Tensor<T>()>([=]() {
      return weighted(patch_expand(leaves[0], leaves[1], leaves[2]));
    });
  });
}

TEST_CASE_TEMPLATE("grad: losses", T, double, float) {
  run_op_check<T>("bce_with_logits", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng, -2, 2)};
    std::vector<T> t(static_cast<size_t>(shape_numel(s)));
    for (auto& v : t) v = rng.bernoulli(0.5) ? T(1) : T(0);
    Tensor<T> targets = Tensor<T>::from(s, std::move(t));
    T pw = static_cast<T>(rng.uniform(0.5, 3.0));
    return std::function<Tensor<T>()>(
        [=]() { return bce_with_logits(leaves[0], targets, pw); });
  });
  run_op_check<T>("bce_probs", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng, 0.05, 0.95)};
    std::vector<T> t(static_cast<size_t>(shape_numel(s)));
    for (auto& v : t) v = rng.bernoulli(0.5) ? T(1) : T(0);
    Tensor<T> targets = Tensor<T>::from(s, std::move(t));
    return std::function<Tensor<T>()>(
        [=]() { return bce_probs(leaves[0], targets); });
  }, 20, 1e-3);
  run_op_check<T>("dice_loss", [](Rng& rng, std::vector<Tensor<T>>& leaves) {
    Shape s = small_shape<T>(rng);
    leaves = {random_tensor<T>(s, rng, 0.05, 0.95)};
    std::vector<T> t(static_cast<size_t>(shape_numel(s)));
    bool any = false;
    for (auto& v : t) {
      v = rng.bernoulli(0.4) ? T(1) : T(0);
      any = any || v == T(1);
    }
    if (!any) t[0] = T(1);
    Tensor<T> targets = Tensor<T>::from(s, std::move(t));
    return std::function<Tensor<T>()>(
        [=]() { return dice_loss(leaves[0], targets, T(1e-6)); });
  });
}
