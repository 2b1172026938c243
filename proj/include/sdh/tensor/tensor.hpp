#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdh::tensor {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
};

// Value-semantic handle onto shared storage. Copies alias the same buffer;
// identity (for gradient accumulation) is the storage pointer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(const Shape& shape) {
    Tensor t;
    t.st_ = std::make_shared<Storage<T>>();
    t.st_->shape = shape;
    t.st_->data.assign(static_cast<size_t>(shape_numel(shape)), T(0));
    return t;
  }

  static Tensor full(const Shape& shape, T value) {
    Tensor t = zeros(shape);
    for (auto& v : t.st_->data) v = value;
    return t;
  }

  static Tensor from(const Shape& shape, std::vector<T> values) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
      throw std::runtime_error("tensor: data length does not match shape");
    Tensor t;
    t.st_ = std::make_shared<Storage<T>>();
    t.st_->shape = shape;
    t.st_->data = std::move(values);
    return t;
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return st_->shape; }
  int64_t numel() const { return static_cast<int64_t>(st_->data.size()); }
  int64_t dim(size_t i) const { return st_->shape.at(i); }
  size_t rank() const { return st_->shape.size(); }

  // Handles have pointer semantics: a const Tensor still exposes mutable
  // storage, like a const shared_ptr.
  std::span<T> data() const { return {st_->data.data(), st_->data.size()}; }

  T item() const {
    if (numel() != 1) throw std::runtime_error("tensor: item() on non-scalar");
    return st_->data[0];
  }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  const Tensor& set_requires_grad(bool v) const {
    st_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return st_ && !st_->grad.empty(); }

  // allocate-on-demand gradient buffer
  std::span<T> grad() const {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), T(0));
    return {st_->grad.data(), st_->grad.size()};
  }

  void zero_grad() const {
    if (st_) st_->grad.clear();
  }

  Storage<T>* storage() const { return st_.get(); }

  bool same_storage(const Tensor& o) const { return st_ == o.st_; }

 private:
  std::shared_ptr<Storage<T>> st_;
};

// Reverse-mode tape. One tape per logical training thread; ops record a
// backward closure whenever an input requires grad and a tape is active.
template <typename T>
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return stack().empty() ? nullptr : stack().back(); }

  void record(std::function<void()> backward) {
    nodes_.push_back(std::move(backward));
  }

  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps in exact reverse execution order.
  // A second call on the same tape throws.
  void backward(Tensor<T> loss) {
    if (used_) throw std::runtime_error("tape: backward called twice without reset");
    if (!loss.defined() || loss.numel() != 1)
      throw std::runtime_error("tape: loss must be a scalar");
    used_ = true;
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      (*it)();
      *it = nullptr;  // release saved tensors as the sweep proceeds
    }
  }

 private:
  static std::vector<Tape*>& stack() {
    static thread_local std::vector<Tape*> s;
    return s;
  }
  std::vector<std::function<void()>> nodes_;
  bool used_ = false;
};

// True when an op must participate in autodiff.
template <typename T>
inline bool grad_enabled(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::active()) return false;
  for (const Tensor<T>* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Trainable tensor with persistent identity and optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> moment1, moment2;  // AdamW state, sized on first step
  int64_t steps = 0;
};

}  // namespace sdh::tensor
