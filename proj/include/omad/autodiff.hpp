#pragma once

// Tape-based reverse-mode differentiation. A Graph records every operation
// applied to its variables in creation order; backward() replays the tape in
// reverse. One graph per forward pass, used by one thread.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "omad/tensor.hpp"

namespace omad {

// Gradient of a scalar loss with respect to each named parameter.
template <typename Real>
using GradMap = std::map<std::string, std::vector<Real>>;

template <typename Real>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Real>
class Var {
 public:
  Var() = default;

  Graph<Real>* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph<Real>;
  Var(Graph<Real>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Real>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Real>
class Graph {
 public:
  // Propagates grad(self) into the grads of the node's inputs.
  using BackwardFn = std::function<void(Graph& graph, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Trainable leaf. Names must be unique within the graph.
  Var<Real> parameter(std::string name, Tensor<Real> value);

  // Leaf that never receives a gradient.
  Var<Real> constant(Tensor<Real> value);

  // Appends an operation result. Used by the op implementations; checks the
  // output for NaN/Inf when finite checks are enabled.
  Var<Real> record(std::string_view op, Tensor<Real> value, std::vector<std::size_t> inputs,
                   BackwardFn backward);

  const Tensor<Real>& value(std::size_t id) const { return nodes_.at(id).value; }

  // True if a gradient flows into this node (it is, or depends on, a parameter).
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  // Gradient buffer of a node during backward(). Only valid for nodes with
  // needs_grad() and only while backward() runs.
  std::span<Real> grad(std::size_t id) { return grads_.at(id); }

  // Reverse pass from a scalar loss. Every parameter of the graph appears in
  // the result, with zeros when it does not influence the loss. May be called
  // repeatedly with different losses.
  GradMap<Real> backward(Var<Real> loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& parameter_names() const { return param_names_; }
  Var<Real> var(std::size_t id) { return Var<Real>(this, id); }

 private:
  struct Node {
    std::string op;
    Tensor<Real> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::string param_name;
  };

  std::deque<Node> nodes_;
  std::vector<std::string> param_names_;
  std::vector<std::size_t> param_ids_;
  std::vector<std::vector<Real>> grads_;
};

template <typename Real>
const Tensor<Real>& Var<Real>::value() const {
  return graph_->value(id_);
}

// Non-finite detection after every op. On by default; the release training
// loop may switch it off.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace omad
