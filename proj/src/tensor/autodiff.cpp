#include "omad/autodiff.hpp"

#include <algorithm>
#include <atomic>

namespace omad {

namespace {

std::atomic<bool>& finite_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}

}  // namespace

bool finite_checks_enabled() { return finite_flag().load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { finite_flag().store(enabled); }

template <typename Real>
Var<Real> Graph<Real>::parameter(std::string name, Tensor<Real> value) {
  if (std::find(param_names_.begin(), param_names_.end(), name) != param_names_.end()) {
    throw ContractError("duplicate parameter name in graph: " + name);
  }
  if (!all_finite<Real>(value.data())) {
    throw NumericError("non-finite value in parameter " + name);
  }
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{"parameter", std::move(value), {}, nullptr, true, name});
  param_names_.push_back(std::move(name));
  param_ids_.push_back(id);
  return Var<Real>(this, id);
}

template <typename Real>
Var<Real> Graph<Real>::constant(Tensor<Real> value) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false, {}});
  return Var<Real>(this, id);
}

template <typename Real>
Var<Real> Graph<Real>::record(std::string_view op, Tensor<Real> value,
                              std::vector<std::size_t> inputs, BackwardFn backward) {
  if (finite_checks_enabled() && !all_finite<Real>(value.data())) {
    throw NumericError("non-finite output from " + std::string(op) + " with shape " +
                       shape_string(value.shape()));
  }
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("op input refers to a future node");
    needs = needs || nodes_[in].needs_grad;
  }
  const std::size_t id = nodes_.size();
  nodes_.push_back(
      Node{std::string(op), std::move(value), std::move(inputs), std::move(backward), needs, {}});
  return Var<Real>(this, id);
}

template <typename Real>
GradMap<Real> Graph<Real>::backward(Var<Real> loss) {
  if (loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(root.value.shape()));
  }

  grads_.assign(nodes_.size(), {});
  for (std::size_t id = 0; id <= loss.id(); ++id) {
    if (nodes_[id].needs_grad) grads_[id].assign(nodes_[id].value.size(), Real{0});
  }
  if (root.needs_grad) {
    grads_[loss.id()][0] = Real{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.needs_grad || !node.backward) continue;
      node.backward(*this, id);
    }
  }

  GradMap<Real> out;
  for (std::size_t k = 0; k < param_ids_.size(); ++k) {
    const std::size_t id = param_ids_[k];
    std::vector<Real> g = id <= loss.id() ? std::move(grads_[id])
                                          : std::vector<Real>(nodes_[id].value.size(), Real{0});
    if (!all_finite<Real>(g)) {
      throw NumericError("non-finite gradient for parameter " + param_names_[k]);
    }
    out.emplace(param_names_[k], std::move(g));
  }
  grads_.clear();
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace omad
