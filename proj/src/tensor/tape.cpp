#include "cot2/tensor/tape.hpp"

#include "cot2/common/error.hpp"

namespace cot2::tensor {

const Tensor& Var::value() const { return tape_->nodes_[id_].value(); }

const Tensor& Var::grad() const { return tape_->ensure_grad(id_); }

bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

const Tensor& AdjointContext::out_grad() const {
  return tape_.nodes_[self_].grad;
}

const Tensor& AdjointContext::out_value() const {
  return tape_.nodes_[self_].value();
}

const Tensor& AdjointContext::input(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[self_].inputs[k]].value();
}

Tensor* AdjointContext::input_grad(std::size_t k) const {
  const std::size_t id = tape_.nodes_[self_].inputs[k];
  if (!tape_.nodes_[id].requires_grad) {
    return nullptr;
  }
  return &tape_.ensure_grad(id);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& value, Tensor* grad_sink) {
  if (grad_sink != nullptr && grad_sink->size() != value.size()) {
    throw DimensionError("tape: gradient sink " + grad_sink->shape_string() +
                         " does not match parameter " + value.shape_string());
  }
  Node node;
  node.external = &value;
  node.requires_grad = grad_sink != nullptr;
  node.sink = grad_sink;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, Adjoint adjoint) {
  Node node;
  node.owned = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) {
      throw UsageError("tape: input recorded on a different tape");
    }
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) {
    node.adjoint = std::move(adjoint);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::ensure_grad(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.grad_ready) {
    node.grad = Tensor::zeros_like(node.value());
    node.grad_ready = true;
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) {
    throw UsageError("backward: loss belongs to a different tape");
  }
  if (!nodes_[loss.id()].value().is_scalar()) {
    throw UsageError("backward: loss must be scalar, got shape " +
                     nodes_[loss.id()].value().shape_string());
  }
  for (Node& node : nodes_) {
    node.grad_ready = false;
  }
  ensure_grad(loss.id())[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad_ready || !node.requires_grad || !node.adjoint) {
      continue;
    }
    node.adjoint(AdjointContext(*this, i));
  }
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& node = nodes_[i];
    if (node.sink != nullptr && node.grad_ready) {
      node.sink->accumulate(node.grad);
    }
  }
}

}  // namespace cot2::tensor
