#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cot2/tensor/tensor.hpp"

namespace cot2::tensor {

class Tape;

/// Handle to a node of a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Tensor& value() const;
  /// Adjoint after Tape::backward; zeros when the loss does not depend on it.
  const Tensor& grad() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a local adjoint rule sees of its node.
class AdjointContext {
 public:
  AdjointContext(Tape& tape, std::size_t self) : tape_(tape), self_(self) {}

  const Tensor& out_grad() const;
  const Tensor& out_value() const;
  const Tensor& input(std::size_t k) const;
  /// Gradient buffer of input k, or nullptr when that input needs no gradient.
  Tensor* input_grad(std::size_t k) const;

 private:
  Tape& tape_;
  std::size_t self_;
};

/// The computation record: nodes appended in evaluation order, so inputs
/// always precede outputs. One tape per forward pass; not thread-safe.
class Tape {
 public:
  using Adjoint = std::function<void(const AdjointContext&)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf that references `value` without copying it. On backward the node's
  /// adjoint is added into `*grad_sink` (when not null), which must have the
  /// same shape and outlive the backward call.
  Var parameter(const Tensor& value, Tensor* grad_sink);

  /// Appends an operation node. The adjoint runs only when some input
  /// requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, Adjoint adjoint);

  /// Reverse sweep from a scalar loss in exact reverse record order. Node
  /// adjoints are reset first, so calling this twice gives identical node
  /// gradients; parameter sinks accumulate on every call.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  friend class AdjointContext;

  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    Tensor* sink = nullptr;

    const Tensor& value() const { return external ? *external : owned; }
  };

  Tensor& ensure_grad(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace cot2::tensor
