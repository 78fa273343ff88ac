#pragma once

#include "vlm/errors.hpp"
#include "vlm/numerics/matrix.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vlm {

template <typename Scalar>
class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape it points into is alive.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat<Scalar>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  std::size_t id() const { return id_; }
  Tape<Scalar>& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording of a computation over dense matrices.
//
// Nodes are appended in evaluation order, which is already a topological
// order, so backward() walks the node list once from the loss downwards.
// A tape is single-use per forward pass and is not thread-safe.
template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), {}, false});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  // Registers a named leaf that receives a gradient. Names are unique.
  Var<Scalar> parameter(std::string name, Matrix value) {
    for (const auto& [existing, id] : params_) {
      if (existing == name) throw ContractViolation("parameter registered twice: " + name);
    }
    nodes_.push_back(Node{std::move(value), Matrix(), {}, true});
    params_.emplace_back(std::move(name), nodes_.size() - 1);
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  void bind(const TensorMap<Scalar>& store) {
    for (const auto& [name, value] : store) parameter(name, value);
  }

  Var<Scalar> param(std::string_view name) {
    for (const auto& [existing, id] : params_) {
      if (existing == name) return Var<Scalar>(this, id);
    }
    throw ContractViolation("unknown parameter: " + std::string(name));
  }

  bool has_param(std::string_view name) const {
    for (const auto& entry : params_) {
      if (entry.first == name) return true;
    }
    return false;
  }

  Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.valid() && &in.tape() != this) throw ContractViolation("operands recorded on different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : Backward{}, needs});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  // Variant for ops with a runtime-sized input list.
  Var<Scalar> record(Matrix value, const std::vector<Var<Scalar>>& inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw ContractViolation("operands recorded on different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : Backward{}, needs});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.value.size() == 0) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  // Returns d(loss)/d(p) for every registered parameter; parameters the loss
  // does not reach map to zero tensors of their own shape.
  GradientMap<Scalar> backward(const Var<Scalar>& loss) {
    if (!loss.valid() || &loss.tape() != this) throw ContractViolation("loss was not recorded on this tape");
    const Matrix& v = value(loss.id());
    if (v.rows() != 1 || v.cols() != 1) {
      throw ContractViolation("backward() needs a scalar loss, got " + std::to_string(v.rows()) + "x" +
                              std::to_string(v.cols()));
    }
    for (auto& node : nodes_) node.grad.resize(0, 0);
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.size() == 0 || !node.backward) continue;
      node.backward(*this, i);
    }
    GradientMap<Scalar> out;
    for (const auto& [name, id] : params_) {
      const Node& node = nodes_[id];
      out.emplace(name, node.grad.size() == 0 ? Matrix::Zero(node.value.rows(), node.value.cols()) : node.grad);
    }
    return out;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> params_;
};

}  // namespace vlm
