#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crossreid/error.hpp"

namespace crossreid {

template <typename T>
struct Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

/// Dense N-dimensional array with optional gradient storage. Shape is fixed at
/// construction; the grad buffer exists iff requires_grad and always matches
/// the value buffer in size. The scalar type selects the precision mode
/// (float for training, double for gradient checking).
template <typename T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> values;
  bool requires_grad = false;
  std::vector<T> grad;

  static std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  static TensorPtr<T> zeros(std::vector<std::int64_t> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    const auto n = element_count(shape);
    t->shape = std::move(shape);
    t->values.assign(static_cast<std::size_t>(n), T(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(static_cast<std::size_t>(n), T(0));
    return t;
  }

  static TensorPtr<T> from(std::vector<std::int64_t> shape, std::vector<T> vals,
                           bool requires_grad = false) {
    const auto n = element_count(shape);
    if (static_cast<std::int64_t>(vals.size()) != n) {
      throw ShapeError("value count " + std::to_string(vals.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    t->values = std::move(vals);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(static_cast<std::size_t>(n), T(0));
    return t;
  }

  static TensorPtr<T> scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  /// Seeded uniform init in [-bound, bound]. Draws in double then narrows so
  /// both precision modes consume the same RNG stream.
  static TensorPtr<T> uniform(std::vector<std::int64_t> shape, double bound,
                              std::mt19937_64& rng, bool requires_grad = true) {
    auto t = zeros(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t->values) v = static_cast<T>(dist(rng));
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

  T item() const {
    if (values.size() != 1) {
      throw ShapeError("item() requires a scalar tensor, got " + shape_str(shape));
    }
    return values[0];
  }

  void zero_grad() {
    for (auto& g : grad) g = T(0);
  }

  bool values_finite() const {
    for (auto v : values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool grad_finite() const {
    for (auto g : grad) {
      if (!std::isfinite(static_cast<double>(g))) return false;
    }
    return true;
  }
};

/// Ordered record of executed differentiable ops. backward() seeds the root
/// gradient with one and replays the recorded closures in exact reverse
/// execution order; every closure accumulates (sums) into the grad buffers of
/// the tensors it consumed. One training step owns its tape exclusively.
template <typename T>
class Tape {
 public:
  void record(const char* op, std::function<void()> backward) {
    steps_.push_back(Step{op, std::move(backward)});
  }

  std::size_t size() const { return steps_.size(); }

  std::vector<std::string> op_names() const {
    std::vector<std::string> names;
    names.reserve(steps_.size());
    for (const auto& s : steps_) names.emplace_back(s.op);
    return names;
  }

  void backward(const TensorPtr<T>& root) {
    if (!root || root->size() != 1) {
      throw ShapeError("backward root must be a scalar tensor");
    }
    if (!root->requires_grad) {
      throw std::invalid_argument("backward root does not require gradients");
    }
    root->grad[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward();
  }

  void clear() { steps_.clear(); }

 private:
  struct Step {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Step> steps_;
};

}  // namespace crossreid
