#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sdh/rng.hpp"
#include "sdh/tensor/checkpoint.hpp"
#include "sdh/tensor/ops.hpp"
#include "sdh/tensor/tensor.hpp"

namespace sdh::nn {

using tensor::Shape;
using tensor::Tensor;

// Parameter/buffer registry shared by both networks. Registration order is
// the construction order, which makes seeded initialization reproducible.
template <typename T>
class ParamSet {
 public:
  explicit ParamSet(uint64_t seed) : rng_(seed) {}

  // fan_in <= 0 means zero-init (biases); otherwise Kaiming-normal
  Tensor<T> param(const std::string& name, const Shape& shape, int64_t fan_in,
                  double gain = 2.0) {
    Tensor<T> t = Tensor<T>::zeros(shape);
    if (fan_in > 0) {
      double std = std::sqrt(gain / static_cast<double>(fan_in));
      for (auto& v : t.data()) v = static_cast<T>(rng_.normal(0.0, std));
    }
    t.set_requires_grad(true);
    tensor::Parameter<T> p;
    p.name = name;
    p.value = t;
    params_.push_back(std::move(p));
    return t;
  }

  Tensor<T> param_const(const std::string& name, const Shape& shape, T value) {
    Tensor<T> t = Tensor<T>::full(shape, value);
    t.set_requires_grad(true);
    tensor::Parameter<T> p;
    p.name = name;
    p.value = t;
    params_.push_back(std::move(p));
    return t;
  }

  Tensor<T> buffer(const std::string& name, const Shape& shape, T value) {
    Tensor<T> t = Tensor<T>::full(shape, value);
    buffers_.emplace_back(name, t);
    return t;
  }

  std::vector<tensor::Parameter<T>>& params() { return params_; }
  const std::vector<tensor::Parameter<T>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor<T>>>& buffers() { return buffers_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  void fill_checkpoint(tensor::Checkpoint<T>& ckpt) const {
    for (const auto& p : params_) ckpt.add("param/" + p.name, p.value);
    for (const auto& [name, t] : buffers_) ckpt.add("buffer/" + name, t);
  }

  void load_from_checkpoint(const tensor::Checkpoint<T>& ckpt) {
    for (auto& p : params_) {
      const Tensor<T>* src = ckpt.find("param/" + p.name);
      if (!src) throw std::runtime_error("checkpoint missing parameter " + p.name);
      if (src->shape() != p.value.shape())
        throw std::runtime_error("checkpoint shape mismatch for " + p.name);
      std::copy(src->data().begin(), src->data().end(), p.value.data().begin());
    }
    for (auto& [name, t] : buffers_) {
      const Tensor<T>* src = ckpt.find("buffer/" + name);
      if (!src) throw std::runtime_error("checkpoint missing buffer " + name);
      std::copy(src->data().begin(), src->data().end(), t.data().begin());
    }
  }

  // deep copy of current values (for best-epoch snapshots)
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    for (const auto& p : params_)
      out.emplace_back(p.value.data().begin(), p.value.data().end());
    for (const auto& [name, t] : buffers_)
      out.emplace_back(t.data().begin(), t.data().end());
    return out;
  }

  void restore(const std::vector<std::vector<T>>& snap) {
    size_t i = 0;
    for (auto& p : params_)
      std::copy(snap.at(i).begin(), snap.at(i).end(), p.value.data().begin()), ++i;
    for (auto& [name, t] : buffers_)
      std::copy(snap.at(i).begin(), snap.at(i).end(), t.data().begin()), ++i;
  }

 private:
  Rng rng_;
  std::vector<tensor::Parameter<T>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
};

// layers ----------------------------------------------------------------

template <typename T>
struct Conv3dLayer {
  Tensor<T> w, b;
  int pad = 1;
  Conv3dLayer() = default;
  Conv3dLayer(ParamSet<T>& ps, const std::string& name, int64_t cin, int64_t cout,
              int64_t k = 3, int pad_ = 1)
      : pad(pad_) {
    w = ps.param(name + ".w", {cout, cin, k, k, k}, cin * k * k * k);
    b = ps.param(name + ".b", {cout}, 0);
  }
  Tensor<T> forward(const Tensor<T>& x) const { return conv3d(x, w, b, 1, pad); }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int pad = 1;
  Conv2dLayer() = default;
  Conv2dLayer(ParamSet<T>& ps, const std::string& name, int64_t cin, int64_t cout,
              int64_t k = 3, int pad_ = 1)
      : pad(pad_) {
    w = ps.param(name + ".w", {cout, cin, k, k}, cin * k * k);
    b = ps.param(name + ".b", {cout}, 0);
  }
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, 1, pad); }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta, running_mean, running_var;
  BatchNormLayer() = default;
  BatchNormLayer(ParamSet<T>& ps, const std::string& name, int64_t channels) {
    gamma = ps.param_const(name + ".gamma", {channels}, T(1));
    beta = ps.param_const(name + ".beta", {channels}, T(0));
    running_mean = ps.buffer(name + ".running_mean", {channels}, T(0));
    running_var = ps.buffer(name + ".running_var", {channels}, T(1));
  }
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return batchnorm(x, gamma, beta, running_mean, running_var, train);
  }
};

template <typename T>
struct LinearLayer {
  Tensor<T> w, b;
  LinearLayer() = default;
  LinearLayer(ParamSet<T>& ps, const std::string& name, int64_t in, int64_t out,
              double gain = 2.0) {
    w = ps.param(name + ".w", {out, in}, in, gain);
    b = ps.param(name + ".b", {out}, 0);
  }
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;
  LayerNormLayer() = default;
  LayerNormLayer(ParamSet<T>& ps, const std::string& name, int64_t dim) {
    gamma = ps.param_const(name + ".gamma", {dim}, T(1));
    beta = ps.param_const(name + ".beta", {dim}, T(0));
  }
  Tensor<T> forward(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta, T(1e-5));
  }
};

// per-step dropout stream: every call site draws a distinct deterministic seed
struct DropoutStream {
  uint64_t base = 0;
  uint64_t counter = 0;
  uint64_t next() { return hash_mix(base, counter++); }
};

}  // namespace sdh::nn
