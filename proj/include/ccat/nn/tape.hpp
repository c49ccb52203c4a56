#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ccat/error.hpp"

namespace ccat::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// A named trainable array. `decay` marks weights that receive L2 regularisation.
template <class T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool decay = true;

  std::size_t size() const { return value.size(); }
};

template <class T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Shape shape, bool decay) {
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    Parameter<T> p;
    p.name = std::move(name);
    p.value.assign(numel(shape), T(0));
    p.grad.assign(p.value.size(), T(0));
    p.shape = std::move(shape);
    p.decay = decay;
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
};

template <class T>
class Tape;

/// Handle to one node of a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Shape& shape() const { return tape_->node(id_).shape; }
  int dim(std::size_t i) const { return shape()[i]; }
  std::size_t size() const { return tape_->node(id_).value.size(); }
  const std::vector<T>& values() const { return tape_->node(id_).value; }
  const std::vector<T>& grad() const { return tape_->node(id_).grad; }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return values()[0];
  }

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records the forward computation; `backward` walks it in reverse creation
/// order, which is a valid topological order because ops only consume
/// existing nodes.
template <class T>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw ShapeError("leaf values do not match shape " + shape_string(shape));
    return Tensor<T>(this, push(std::move(shape), std::move(values), requires_grad && grad_enabled_, {}));
  }

  /// Leaf whose gradient is added into `p.grad` when backward runs.
  Tensor<T> param(Parameter<T>& p) {
    const auto id = push(p.shape, p.value, grad_enabled_, {});
    nodes_[id].param = &p;
    return Tensor<T>(this, id);
  }

  /// Appends an op result. `backward` is dropped when no input needs gradients.
  std::size_t push(Shape shape, std::vector<T> values, bool requires_grad,
                   std::function<void()> backward) {
    for (const T& v : values) {
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("non-finite value produced in tensor of shape " + shape_string(shape));
    }
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, as seen from inside an op's backward closure.
  std::vector<T>& grad_of(std::size_t id) { return nodes_[id].grad; }

  /// Reverse pass from a scalar. Node gradients are recomputed from scratch;
  /// parameter gradients accumulate (+=) across calls.
  void backward(const Tensor<T>& loss) {
    if (loss.tape() != this) throw ShapeError("loss belongs to another tape");
    if (loss.size() != 1) throw ShapeError("backward needs a scalar, got " + shape_string(loss.shape()));
    const std::size_t last = loss.id();
    for (std::size_t i = 0; i <= last; ++i) {
      auto& n = nodes_[i];
      n.grad.assign(n.requires_grad ? n.value.size() : 0, T(0));
    }
    if (!nodes_[last].requires_grad) return;
    nodes_[last].grad[0] = T(1);
    for (std::size_t i = last + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.backward) n.backward();
      if (n.param != nullptr) {
        auto& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
    for (std::size_t i = 0; i <= last; ++i) {
      for (const T& g : nodes_[i].grad) {
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("non-finite gradient in tensor of shape " + shape_string(nodes_[i].shape));
      }
    }
  }

  /// Smallest distance between any rectifier input and its kink seen so far.
  /// Finite-difference checks are only meaningful when this exceeds the step.
  double kink_margin() const { return kink_margin_; }
  void note_kink_distance(double d) { kink_margin_ = std::min(kink_margin_, d); }

 private:
  bool grad_enabled_;
  std::deque<Node> nodes_;  // deque: references to earlier nodes survive push_back
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace ccat::nn
