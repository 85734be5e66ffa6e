#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "imvalign/errors.hpp"

namespace imvalign {

// Dense rank-1..3 real tensor. Value and gradient planes are shared_ptr so an
// op's backward closure can keep the planes of its inputs alive cheaply.
// Tensors are immutable once created within a step; the gradient plane is the
// only thing mutated, and only during backward/optimizer updates.
template <class Real>
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<Real>> data;
  std::shared_ptr<std::vector<Real>> grad;

  Tensor() = default;

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> shape_) {
    Tensor t;
    t.shape = std::move(shape_);
    t.data = std::make_shared<std::vector<Real>>(
        static_cast<std::size_t>(numel_of(t.shape)), Real(0));
    return t;
  }

  static Tensor from(std::vector<int> shape_, std::vector<Real> values) {
    if (numel_of(shape_) != static_cast<long long>(values.size()))
      throw DimensionError("tensor: value count does not match shape");
    Tensor t;
    t.shape = std::move(shape_);
    t.data = std::make_shared<std::vector<Real>>(std::move(values));
    return t;
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  // [0, 1, ..., n-1]
  static Tensor iota(int n) {
    Tensor t = zeros({n});
    for (int i = 0; i < n; ++i) (*t.data)[i] = Real(i);
    return t;
  }

  long long numel() const { return data ? static_cast<long long>(data->size()) : 0; }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  int rows() const {
    if (rank() != 2) throw DimensionError("tensor: rows() needs rank 2");
    return shape[0];
  }
  int cols() const {
    if (rank() != 2) throw DimensionError("tensor: cols() needs rank 2");
    return shape[1];
  }

  // Plane access is shallow-const: the planes are shared, and backward
  // closures holding const copies must still accumulate into them.
  Real* ptr() const { return data->data(); }
  Real* gptr() const { return grad ? grad->data() : nullptr; }

  bool tracked() const { return grad != nullptr; }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<Real>>(data->size(), Real(0));
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), Real(0));
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // Value-only copy sharing the data plane but dropping gradient tracking.
  // Used to cut the gradient path to a target (stop-gradient).
  Tensor detached() const {
    Tensor t;
    t.shape = shape;
    t.data = data;
    return t;
  }

  Tensor clone_values() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<Real>>(*data);
    return t;
  }
};

// Records the ops applied during one forward pass. Confined to one thread.
// backward() replays the recorded closures in reverse, accumulating into the
// gradient planes of every tracked tensor.
template <class Real>
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  // Smallest |pre-activation| seen at a kink (relu, abs). Finite-difference
  // checks reject sample points whose margin is below 10*eps.
  void note_kink_margin(double m) {
    if (m < kink_margin_) kink_margin_ = m;
  }
  double kink_margin() const { return kink_margin_; }

  std::size_t size() const { return steps_.size(); }

  void backward(Tensor<Real>& loss) {
    if (loss.numel() != 1)
      throw DimensionError("backward: loss must be a scalar");
    loss.ensure_grad();
    (*loss.grad)[0] += Real(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

// Named trainable tensor. value() counts reads so tests can audit which
// parameter groups an inference pass touched.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> tensor;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor<Real> t, bool trainable_ = true)
      : name(std::move(name_)), tensor(std::move(t)), trainable(trainable_) {
    tensor.ensure_grad();
  }

  Parameter(const Parameter& o)
      : name(o.name), tensor(o.tensor), trainable(o.trainable) {
    reads_.store(o.reads_.load(std::memory_order_relaxed), std::memory_order_relaxed);
  }
  Parameter& operator=(const Parameter& o) {
    name = o.name;
    tensor = o.tensor;
    trainable = o.trainable;
    reads_.store(o.reads_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    return *this;
  }
  Parameter(Parameter&& o) noexcept
      : name(std::move(o.name)), tensor(std::move(o.tensor)), trainable(o.trainable) {
    reads_.store(o.reads_.load(std::memory_order_relaxed), std::memory_order_relaxed);
  }
  Parameter& operator=(Parameter&& o) noexcept {
    name = std::move(o.name);
    tensor = std::move(o.tensor);
    trainable = o.trainable;
    reads_.store(o.reads_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    return *this;
  }

  const Tensor<Real>& value() const {
    reads_.fetch_add(1, std::memory_order_relaxed);
    return tensor;
  }

  std::uint64_t reads() const { return reads_.load(std::memory_order_relaxed); }
  void reset_reads() const { reads_.store(0, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> reads_{0};
};

}  // namespace imvalign
